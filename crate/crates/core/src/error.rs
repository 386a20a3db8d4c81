use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("species index {index} out of range (R = {count})")]
    SpeciesIndex { index: usize, count: usize },

    #[error("grid spacing {spacing} does not resolve kernel width {width} (need spacing <= width / 4)")]
    GridTooCoarse { spacing: f64, width: f64 },

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("step size too large: dt * R * C_a = {product} exceeds max event probability {max}")]
    StepTooLarge { product: f64, max: f64 },

    #[error("initial density is identically zero")]
    ZeroInitialDensity,

    #[error("negativity clipping removed {clipped} of total mass {total}")]
    ExcessiveClipping { clipped: f64, total: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A single failed check, with enough indices to locate the offending entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSpecies,
    FirstMassNotUnit { mass: u32 },
    MassesNotIncreasing { r: usize },
    NonPositiveSigma { r: usize, sigma: f64 },
    NonPositiveCutoff { value: f64 },
    DimensionMismatch { what: String, expected: usize, found: usize },
    UnsupportedDimension { dim: usize },
    FragmentMass { r: usize, q: usize, got: u64, expected: u64 },
    FragmentShape { expected: usize, found: usize },
    RateAsymmetric { r: usize, q: usize },
    RateNegative { r: usize, q: usize, value: f64 },
    RateNotFinite { r: usize, q: usize },
    RateShape { expected: usize, found: usize },
    BadSpeedLaw(String),
    BadRadius { r: usize, value: f64 },
    VelocityNotFinite { r: usize },
    RotationalNeeds2d { r: usize },
    SmoothingExponent { beta_hat: f64, bound: f64 },
    InteractionExponent { beta: f64, bound: f64 },
    Other(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoSpecies => write!(f, "species table is empty"),
            FirstMassNotUnit { mass } => write!(f, "m[1] must be 1, got {mass}"),
            MassesNotIncreasing { r } => {
                write!(f, "masses must be strictly increasing (m[{}] >= m[{}])", r, r + 1)
            }
            NonPositiveSigma { r, sigma } => write!(f, "sigma[{}] = {sigma} must be > 0", r + 1),
            NonPositiveCutoff { value } => write!(f, "rate cutoff C_a = {value} must be > 0"),
            DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            UnsupportedDimension { dim } => write!(f, "dimension {dim} not in {{1, 2, 3}}"),
            FragmentMass { r, q, got, expected } => write!(
                f,
                "sum_l m[l] e[{}][{}][l] = {got}, expected m[{}] = {expected}",
                r + 1,
                q + 1,
                r + 1
            ),
            FragmentShape { expected, found } => {
                write!(f, "fragment table has {found} species, expected {expected}")
            }
            RateAsymmetric { r, q } => {
                write!(f, "collision rate not symmetric at ({}, {})", r + 1, q + 1)
            }
            RateNegative { r, q, value } => {
                write!(f, "collision rate ({}, {}) = {value} is negative", r + 1, q + 1)
            }
            RateNotFinite { r, q } => {
                write!(f, "collision rate ({}, {}) is not finite", r + 1, q + 1)
            }
            RateShape { expected, found } => {
                write!(f, "collision rate table has {found} species, expected {expected}")
            }
            BadSpeedLaw(msg) => write!(f, "speed law: {msg}"),
            BadRadius { r, value } => write!(f, "radius[{}] = {value} must be > 0", r + 1),
            VelocityNotFinite { r } => write!(f, "velocity field {} is not finite", r + 1),
            RotationalNeeds2d { r } => {
                write!(f, "velocity field {} is rotational but dimension is not 2", r + 1)
            }
            SmoothingExponent { beta_hat, bound } => {
                write!(f, "beta_hat = {beta_hat} must satisfy 0 < beta_hat < d/(d+2) = {bound}")
            }
            InteractionExponent { beta, bound } => {
                write!(f, "beta = {beta} must satisfy 0 < beta < beta_hat/(d+1) = {bound}")
            }
            Other(msg) => f.write_str(msg),
        }
    }
}

/// Outcome of a validation pass. Validation never aborts; callers decide what
/// to do with a non-empty report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    /// Converts a non-empty report into [`Error::Validation`].
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}
