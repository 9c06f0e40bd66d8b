use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("flux b = {b} is not quantized on side L = {l} (b*L/2pi = {ratio})")]
    FluxQuantization { b: f64, l: usize, ratio: f64 },
    #[error("site ({x1}, {x2}) is outside the {l}x{l} torus")]
    SiteOutOfRange { x1: usize, x2: usize, l: usize },
    #[error("mode {mode} is not in the operator frame")]
    ModeOutOfFrame { mode: usize },
    #[error("operator is not gauge invariant (|[A, N]| = {0:.3e})")]
    NotGaugeInvariant(f64),
    #[error("support wraps the torus in direction {0}; declare a center to take position commutators")]
    WrappingSupport(usize),
    #[error("{modes} modes exceed the many-body cap of {cap}")]
    Oversize { modes: usize, cap: usize },
    #[error("chemical potential {mu} is within {dist:.3e} of the spectrum")]
    MuInSpectrum { mu: f64, dist: f64 },
    #[error("spectral gap {actual:.6} is smaller than the filter parameter g = {required:.6}")]
    GapTooSmall { actual: f64, required: f64 },
    #[error("operator is not T-compatible (defect {0:.3e})")]
    NotTCompatible(f64),
    #[error("interactions live on different tori or translations")]
    TranslationMismatch,
    #[error("state is not translation periodic (defect {0:.3e})")]
    NonPeriodicState(f64),
    #[error("NEASS order {0} is outside 1..=4")]
    OrderOverflow(usize),
    #[error("segment length {segment} exceeds torus side {side}")]
    SegmentTooLong { segment: usize, side: usize },
    #[error("kspace Chern needs rational flux p/q with q | L: {0}")]
    KspacePrecondition(String),
    #[error("time quadrature did not converge: error plateau {0:.3e}")]
    QuadratureDiverged(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("operation needs a pure or mixed state, not a quasi-free one")]
    UnsupportedState,
}
