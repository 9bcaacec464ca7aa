//! Benchmark configurations on `Ω = [-2, 2]`, `t ∈ [0, 1/2]`.

use core::fmt;
use core::str::FromStr;

pub const DOMAIN: (f64, f64) = (-2.0, 2.0);
pub const FINAL_TIME: f64 = 0.5;
pub const DEFAULT_DT: f64 = 1.0 / 40.0;

/// Which roughness profile is recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExampleId {
    /// Smooth profile `1 + (x² - 4)² / 16`.
    Cont,
    /// One plateau, `1 + χ[-5/4, 3/4]`.
    Discont,
    /// A dip and a bump, `1 - χ[-7/8, -3/8]/2 + χ[5/8, 9/8]/2`.
    Disc2,
}

impl ExampleId {
    pub const ALL: [ExampleId; 3] = [ExampleId::Cont, ExampleId::Discont, ExampleId::Disc2];

    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Cont => "cont",
            ExampleId::Discont => "discont",
            ExampleId::Disc2 => "disc2",
        }
    }

    /// Mesh size used for this profile.
    pub fn default_h(self) -> f64 {
        match self {
            ExampleId::Cont | ExampleId::Discont => 0.25,
            ExampleId::Disc2 => 0.125,
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExampleId {
    type Err = &'static str;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cont" => Ok(ExampleId::Cont),
            "discont" => Ok(ExampleId::Discont),
            "disc2" => Ok(ExampleId::Disc2),
            _ => Err("expected one of: cont, discont, disc2"),
        }
    }
}

/// Characteristic function of the closed interval `[a, b]`.
fn indicator(x: f64, a: f64, b: f64) -> f64 {
    if (a..=b).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// True roughness coefficient `d_f†(x)`.
pub fn exact_coefficient(id: ExampleId, x: f64) -> f64 {
    match id {
        ExampleId::Cont => {
            let s = x * x - 4.0;
            1.0 + s * s / 16.0
        }
        ExampleId::Discont => 1.0 + indicator(x, -1.25, 0.75),
        ExampleId::Disc2 => 1.0 - 0.5 * indicator(x, -0.875, -0.375) + 0.5 * indicator(x, 0.625, 1.125),
    }
}

/// Initial water height `u₀(x) = -x/4 + 3/2`, shared by all examples.
pub fn initial_condition(x: f64) -> f64 {
    -0.25 * x + 1.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_values() {
        assert_eq!(exact_coefficient(ExampleId::Cont, 0.0), 2.0);
        assert_eq!(exact_coefficient(ExampleId::Cont, 2.0), 1.0);
        assert_eq!(exact_coefficient(ExampleId::Cont, -2.0), 1.0);
        assert_eq!(exact_coefficient(ExampleId::Discont, 0.0), 2.0);
        assert_eq!(exact_coefficient(ExampleId::Discont, -1.25), 2.0);
        assert_eq!(exact_coefficient(ExampleId::Discont, 0.75), 2.0);
        assert_eq!(exact_coefficient(ExampleId::Discont, 1.0), 1.0);
        assert_eq!(exact_coefficient(ExampleId::Disc2, -0.625), 0.5);
        assert_eq!(exact_coefficient(ExampleId::Disc2, 1.0), 1.5);
        assert_eq!(exact_coefficient(ExampleId::Disc2, 0.0), 1.0);
    }

    #[test]
    fn initial_values() {
        assert_eq!(initial_condition(0.0), 1.5);
        assert_eq!(initial_condition(-2.0), 2.0);
        assert_eq!(initial_condition(2.0), 1.0);
    }

    #[test]
    fn parse_names() {
        for id in ExampleId::ALL {
            assert_eq!(id.name().parse::<ExampleId>(), Ok(id));
        }
        assert!("other".parse::<ExampleId>().is_err());
        assert_eq!(ExampleId::Disc2.default_h(), 0.125);
    }
}
