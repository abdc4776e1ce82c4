use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {coords:?} is outside the overlap of chart {from} and chart {to}")]
    OutsideOverlap { from: usize, to: usize, coords: Vec<f64> },

    #[error("no local representative of `{map}` covers the point in chart {chart}")]
    NoLocalRep { map: String, chart: usize },

    #[error("point is not inside any chart of `{0}`")]
    NotInChart(String),

    #[error("partition of unity has no support at the point (total raw weight {weight})")]
    CoverageGap { weight: f64 },

    #[error("bilinear form is not symmetric: residual {residual:e}")]
    AsymmetricB { residual: f64 },

    #[error("anchors do not intertwine under the bundle map: residual {residual:e}")]
    AnchorMismatch { residual: f64 },

    #[error("flow left the chart domains at t = {t_exit}")]
    LeftDomain { t_exit: f64 },

    #[error("integrator exhausted {0} steps")]
    MaxSteps(usize),

    #[error("base curve leaves the atlas at t = {0}")]
    CurveLeavesAtlas(f64),

    #[error("Newton solve diverged at node {node} (last residual {residual:e})")]
    NewtonDiverged { node: usize, residual: f64 },

    #[error("node {node}: target point is outside the image of the local addition")]
    OutsideImage { node: usize },

    #[error("node {node}: section is not based at the chart centre")]
    BaseMismatch { node: usize },

    #[error("flow failed at node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown check `{0}`")]
    UnknownCheck(String),

    #[error("configuration error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_node(self, node: usize) -> Self {
        match self {
            e @ (Error::NewtonDiverged { .. } | Error::OutsideImage { .. } | Error::AtNode { .. }) => e,
            other => Error::AtNode { node, source: Box::new(other) },
        }
    }
}
