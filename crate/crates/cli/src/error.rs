use std::fmt;

use thought_graph::baselines::BaselineError;
use thought_graph::dataset::DatasetError;
use thought_graph::engine::{ConfigError, TemplateError};
use thought_graph::evaluation::EvalError;
use thought_graph::gateway::GatewayError;
use thought_graph::graph::GraphError;
use thought_graph::ontology::OntologyError;
use thought_graph::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Input,
    Gateway,
    Generation,
    Evaluation,
    Io,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Input => "input",
            Category::Gateway => "gateway",
            Category::Generation => "generation",
            Category::Evaluation => "evaluation",
            Category::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Input => 3,
            Category::Gateway => 4,
            Category::Generation => 5,
            Category::Evaluation => 6,
            Category::Io => 7,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl fmt::Display) -> Self {
        CliError {
            category,
            message: message.to_string(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn input(message: impl fmt::Display) -> Self {
        Self::new(Category::Input, message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(Category::Io, format!("{}: {e}", path.display()))
    }
}

/// `error[category]: message`, newlines folded so it stays one line.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg: Vec<&str> = self.message.lines().map(str::trim).collect();
        write!(f, "error[{}]: {}", self.category.as_str(), msg.join(" "))
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) => Self::config(e),
            _ => Self::new(Category::Gateway, e),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Gateway(g) => g.into(),
            EngineError::Config(_) | EngineError::Template(_) => Self::config(e),
            EngineError::Graph(GraphError::GeneSet(_)) => Self::input(e),
            _ => Self::new(Category::Generation, e),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        Self::config(e)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::input(e)
    }
}

impl From<OntologyError> for CliError {
    fn from(e: OntologyError) -> Self {
        Self::input(e)
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        Self::input(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Gateway(g) => g.into(),
            _ => Self::new(Category::Evaluation, e),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Engine(inner) => inner.into(),
            _ => Self::input(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Prefix the message with the gene set it concerns.
    pub fn with_context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}
