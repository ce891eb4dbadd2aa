use thiserror::Error;

/// Errors produced anywhere in the synthesis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate agent id {0}")]
    DuplicateAgent(usize),
    #[error("agent ids must be contiguous from 0; missing id {0}")]
    NonContiguousIds(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("SE group weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("agent {member} is not a member of the SE group")]
    NotAMember { member: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty candidate gradient set")]
    EmptyCandidates,
    #[error("barrier value {0} is positive; V = -h would be negative")]
    PositiveBarrier(f64),
    #[error("slack penalty must be positive, got {0}")]
    InvalidPenalty(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("QP has {rows} rows; the enumeration oracle accepts at most {max}")]
    TooManyRows { rows: usize, max: usize },
    #[error("singular KKT system persisted after regularization")]
    SingularKkt,
    #[error("QP infeasible for agent {agent} at t = {time}")]
    Infeasible { agent: usize, time: f64 },
    #[error("coincident sites {0} and {1}")]
    CoincidentSites(usize, usize),
    #[error("site {0} lies outside the domain")]
    OutsideDomain(usize),
    #[error("quadrature did not converge (estimate {estimate}, level {level})")]
    Quadrature { estimate: f64, level: usize },
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("stale cell moments for agent {0}")]
    StaleMoments(usize),
    #[error("agent {agent} read the state of agent {read}, which is outside its neighborhood")]
    UndeclaredRead { agent: usize, read: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A manifest problem, anchored to a 1-based source line when known.
    #[error("{}{message}", line.map_or(String::new(), |l| format!("line {l}: ")))]
    Manifest { line: Option<usize>, message: String },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
