//! Declarative description of the tiny 3D U-Net and its group shift setup.

use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::group_shift::SpatialGroups;

/// Default per-stage widths.
pub const DEFAULT_CHANNELS: [usize; 5] = [16, 32, 64, 128, 256];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    Pointwise,
    Conv3,
}

/// Where group shifts sit inside each two-convolution block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsInsertPosition {
    None,
    /// conv, shift, conv
    Csc,
    /// conv, conv, shift
    Ccs,
    /// conv, shift, conv, shift
    Cscs,
    /// `Cscs`, plus a shift right after every decoder upsampling.
    CscsUpshift,
}

impl GsInsertPosition {
    pub const ALL_SHIFTING: [GsInsertPosition; 4] = [
        GsInsertPosition::Csc,
        GsInsertPosition::Ccs,
        GsInsertPosition::Cscs,
        GsInsertPosition::CscsUpshift,
    ];

    /// Whether a shift follows the first and the second convolution.
    pub fn after_conv(&self) -> (bool, bool) {
        match self {
            GsInsertPosition::None => (false, false),
            GsInsertPosition::Csc => (true, false),
            GsInsertPosition::Ccs => (false, true),
            GsInsertPosition::Cscs | GsInsertPosition::CscsUpshift => (true, true),
        }
    }

    pub fn up_shift(&self) -> bool {
        matches!(self, GsInsertPosition::CscsUpshift)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GsInsertPosition::None => "none",
            GsInsertPosition::Csc => "csc",
            GsInsertPosition::Ccs => "ccs",
            GsInsertPosition::Cscs => "cscs",
            GsInsertPosition::CscsUpshift => "cscs_upshift",
        }
    }
}

impl FromStr for GsInsertPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" => GsInsertPosition::None,
            "csc" => GsInsertPosition::Csc,
            "ccs" => GsInsertPosition::Ccs,
            "cscs" => GsInsertPosition::Cscs,
            "cscs_upshift" | "cscsupshift" => GsInsertPosition::CscsUpshift,
            other => return Err(Error::config(format!("unknown insert position `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GsPlacement {
    Encoder,
    Decoder,
    Both,
}

impl GsPlacement {
    pub const ALL: [GsPlacement; 3] = [GsPlacement::Encoder, GsPlacement::Decoder, GsPlacement::Both];

    pub fn encoder(&self) -> bool {
        matches!(self, GsPlacement::Encoder | GsPlacement::Both)
    }

    pub fn decoder(&self) -> bool {
        matches!(self, GsPlacement::Decoder | GsPlacement::Both)
    }
}

impl FromStr for GsPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "encoder" => GsPlacement::Encoder,
            "decoder" => GsPlacement::Decoder,
            "both" => GsPlacement::Both,
            other => return Err(Error::config(format!("unknown placement `{other}`"))),
        })
    }
}

/// Spatial-group presets, one entry per stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpatialGroupPreset {
    ProSGv1,
    ProSGv2,
    ProSGv3,
    ProSGv4,
    BraTSv1,
}

impl SpatialGroupPreset {
    pub const ALL: [SpatialGroupPreset; 5] = [
        SpatialGroupPreset::ProSGv1,
        SpatialGroupPreset::ProSGv2,
        SpatialGroupPreset::ProSGv3,
        SpatialGroupPreset::ProSGv4,
        SpatialGroupPreset::BraTSv1,
    ];

    /// Group counts `(depth, height, width)` for stages 1–5.
    pub fn groups(&self) -> [SpatialGroups; 5] {
        let g = SpatialGroups::new;
        match self {
            SpatialGroupPreset::ProSGv1 => [g(2, 2, 2), g(2, 2, 2), g(2, 4, 4), g(1, 8, 8), g(1, 8, 8)],
            SpatialGroupPreset::ProSGv2 => [g(1, 2, 2), g(1, 4, 4), g(2, 4, 4), g(1, 8, 8), g(1, 8, 8)],
            SpatialGroupPreset::ProSGv3 => [g(2, 2, 2), g(1, 4, 4), g(1, 4, 4), g(1, 8, 8), g(1, 8, 8)],
            SpatialGroupPreset::ProSGv4 => [g(1, 2, 2), g(2, 2, 2), g(2, 4, 4), g(1, 8, 8), g(1, 8, 8)],
            SpatialGroupPreset::BraTSv1 => [g(2, 2, 2), g(2, 2, 2), g(2, 2, 2), g(4, 4, 4), g(5, 5, 5)],
        }
    }

    /// Input crop `(D, H, W)` the preset was designed for.
    pub fn input_dims(&self) -> (usize, usize, usize) {
        match self {
            SpatialGroupPreset::BraTSv1 => (64, 128, 128),
            _ => (16, 128, 128),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SpatialGroupPreset::ProSGv1 => "prosgv1",
            SpatialGroupPreset::ProSGv2 => "prosgv2",
            SpatialGroupPreset::ProSGv3 => "prosgv3",
            SpatialGroupPreset::ProSGv4 => "prosgv4",
            SpatialGroupPreset::BraTSv1 => "bratsv1",
        }
    }
}

impl FromStr for SpatialGroupPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "prosgv1" => SpatialGroupPreset::ProSGv1,
            "prosgv2" => SpatialGroupPreset::ProSGv2,
            "prosgv3" => SpatialGroupPreset::ProSGv3,
            "prosgv4" => SpatialGroupPreset::ProSGv4,
            "bratsv1" | "brats" => SpatialGroupPreset::BraTSv1,
            other => return Err(Error::config(format!("unknown spatial-group preset `{other}`"))),
        })
    }
}

/// Per-stage group counts for a named preset.
pub fn preset_spatial_groups(name: &str) -> Result<[SpatialGroups; 5]> {
    Ok(name.parse::<SpatialGroupPreset>()?.groups())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub channels: usize,
    #[serde(with = "groups_array")]
    pub groups: SpatialGroups,
    pub conv: ConvKind,
}

/// Fraction of channels that are shifted, kept exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShiftFraction(pub Ratio<usize>);

impl ShiftFraction {
    pub fn half() -> Self {
        ShiftFraction(Ratio::new(1, 2))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: usize = p.trim().parse().map_err(|_| Error::config(format!("bad fraction `{s}`")))?;
            let q: usize = q.trim().parse().map_err(|_| Error::config(format!("bad fraction `{s}`")))?;
            if q == 0 {
                return Err(Error::config("fraction denominator is zero"));
            }
            return Self::checked(Ratio::new(p, q));
        }
        let v: f64 = s.parse().map_err(|_| Error::config(format!("bad fraction `{s}`")))?;
        Self::from_f64(v)
    }

    pub fn from_f64(v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::config(format!("shift fraction {v} outside [0, 1]")));
        }
        let r = Ratio::<i64>::approximate_float(v)
            .ok_or_else(|| Error::config(format!("cannot represent {v} as a fraction")))?;
        Self::checked(Ratio::new(*r.numer() as usize, *r.denom() as usize))
    }

    fn checked(r: Ratio<usize>) -> Result<Self> {
        if r > Ratio::from_integer(1) {
            return Err(Error::config(format!("shift fraction {r} exceeds 1")));
        }
        Ok(ShiftFraction(r))
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl Serialize for ShiftFraction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.to_f64();
        match ShiftFraction::from_f64(v) {
            Ok(back) if back == *self => s.serialize_f64(v),
            _ => s.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom())),
        }
    }
}

impl<'de> Deserialize<'de> for ShiftFraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) => ShiftFraction::from_f64(v),
            Raw::Text(t) => ShiftFraction::parse(&t),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub num_classes: usize,
    pub stages: Vec<StageSpec>,
    pub insert: GsInsertPosition,
    pub placement: GsPlacement,
    #[serde(default = "ShiftFraction::half")]
    pub shift_fraction: ShiftFraction,
}

impl NetworkSpec {
    /// Five stages at the default widths with the given groups and conv kind.
    pub fn tiny_unet(
        in_channels: usize,
        num_classes: usize,
        groups: [SpatialGroups; 5],
        conv: ConvKind,
        insert: GsInsertPosition,
        placement: GsPlacement,
    ) -> Self {
        Self::with_channels(in_channels, num_classes, DEFAULT_CHANNELS, groups, conv, insert, placement)
    }

    pub fn with_channels<const S: usize>(
        in_channels: usize,
        num_classes: usize,
        channels: [usize; S],
        groups: [SpatialGroups; S],
        conv: ConvKind,
        insert: GsInsertPosition,
        placement: GsPlacement,
    ) -> Self {
        NetworkSpec {
            in_channels,
            num_classes,
            stages: channels
                .iter()
                .zip(groups)
                .map(|(&channels, groups)| StageSpec { channels, groups, conv })
                .collect(),
            insert,
            placement,
            shift_fraction: ShiftFraction::half(),
        }
    }

    pub fn from_preset(
        preset: SpatialGroupPreset,
        in_channels: usize,
        num_classes: usize,
        insert: GsInsertPosition,
        placement: GsPlacement,
    ) -> Self {
        Self::tiny_unet(in_channels, num_classes, preset.groups(), ConvKind::Pointwise, insert, placement)
    }

    /// Structural checks that do not depend on input dims.
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::config("in_channels and num_classes must be >= 1"));
        }
        if self.stages.is_empty() || self.stages.len() > 5 {
            return Err(Error::config(format!(
                "expected 1 to 5 stages, got {}",
                self.stages.len()
            )));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.channels == 0 || st.groups.d == 0 || st.groups.h == 0 || st.groups.w == 0 {
                return Err(Error::config(format!("stage {}: channels and group counts must be >= 1", i + 1)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Same spec with every shift removed.
    pub fn without_shift(&self) -> Self {
        NetworkSpec { insert: GsInsertPosition::None, ..self.clone() }
    }

    /// Same spec with every stage using `conv`.
    pub fn with_conv(&self, conv: ConvKind) -> Self {
        let mut s = self.clone();
        s.stages.iter_mut().for_each(|st| st.conv = conv);
        s
    }
}

mod groups_array {
    use super::SpatialGroups;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &SpatialGroups, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([g.d, g.h, g.w])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SpatialGroups, D::Error> {
        let [a, b, c] = <[usize; 3]>::deserialize(d)?;
        Ok(SpatialGroups::new(a, b, c))
    }
}
