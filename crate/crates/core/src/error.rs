use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid attitude: quaternion norm {norm} is not 1")]
    InvalidAttitude { norm: f64 },
    #[error("chart domain: |qv| = {norm} is outside the open unit ball")]
    ChartDomain { norm: f64 },
    #[error("point lies inside the body (level {level})")]
    InsideBody { level: f64 },
    #[error("point is not on the hull (level residual {residual:e})")]
    OffBoundary { residual: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("quadrature did not converge (estimated error {achieved:e})")]
    Quadrature { achieved: f64 },
    #[error("incompatible Neumann data: mean flux {residual:e}")]
    Compatibility { residual: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("toy coefficient alpha = {alpha:e} vanishes")]
    AlphaVanishes { alpha: f64 },
    #[error("reference loop amplitude: {0}")]
    Amplitude(String),
    #[error("Taylor order {needed} required, {available} available")]
    TaylorOrder { needed: usize, available: usize },
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("steering did not converge: {0}")]
    Locality(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Geometry(_) | Error::InsideBody { .. } | Error::OffBoundary { .. }
        )
    }
}
