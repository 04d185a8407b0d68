use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} values but {got} were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("conv2d_same: kernel extents must be odd, got {kh}x{kw}")]
    EvenKernel { kh: usize, kw: usize },
    #[error("{op}: channel mismatch, input has {input} channels but parameters expect {expected}")]
    ChannelMismatch {
        op: &'static str,
        input: usize,
        expected: usize,
    },
    #[error("{op}: extent {extent} is not divisible by factor {factor}")]
    NotDivisible {
        op: &'static str,
        extent: usize,
        factor: usize,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("batchnorm2d: eval mode requested before running statistics were initialized")]
    UninitializedStats,
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward: graph was already consumed by a previous backward pass")]
    GraphConsumed,
    #[error("variable belongs to a different graph")]
    ForeignVar,
}

impl TensorError {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}
