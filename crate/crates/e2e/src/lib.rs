//! Holds the long-running acceptance test (`tests/acceptance.rs`), kept in its
//! own package so it runs after the unit and integration suites.
