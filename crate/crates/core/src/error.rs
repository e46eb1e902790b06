use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rotation angle {angle} rad is too close to pi for a stable logarithm")]
    NearSingularity { angle: f64 },
    #[error("point ({x}, {y}, {z}) lies outside the cell bounds")]
    ContainmentViolation { x: f64, y: f64, z: f64 },
    #[error("keyframe has {plane_cells} plane cells, at least 3 are needed for a canonical rotation")]
    DegenerateKeyframe { plane_cells: usize },
    #[error("similarity is undefined for a constant histogram")]
    UndefinedSimilarity,
    #[error("alignment failed: no correspondences for any initial guess")]
    AlignmentFailed,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
