//! Network description, construction and differentiation.

pub mod flat;
pub mod graph;
pub mod rf;
pub mod spec;

pub use flat::{FlatLayer, FlatStack};
pub use graph::{build_network, BlockOp, ConvLayer, ConvUnit, LayerInfo, LayerKind, Network, NetworkGrads, ShiftLayer, Side};
pub use rf::{effective_rf_support, InputGradient};
pub use spec::{
    preset_spatial_groups, ConvKind, GsInsertPosition, GsPlacement, NetworkSpec, ShiftFraction, SpatialGroupPreset,
    StageSpec, DEFAULT_CHANNELS,
};
