//! Process-level failure handling. Every error a command can hit lands in
//! one of four stable categories, each with a fixed exit code:
//! 1 CONFIG (the manifest or configuration is unusable), 2 INPUT (a
//! referenced input cannot be read or parsed), 3 OUTPUT (an artifact
//! cannot be written), 4 BAD_ARGUMENTS (the command line itself is wrong).

use std::fmt;

use medkb_core::error::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Input,
    Output,
    BadArguments,
}

impl Category {
    pub fn code(self) -> i32 {
        match self {
            Category::Config => 1,
            Category::Input => 2,
            Category::Output => 3,
            Category::BadArguments => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Category::Config => "CONFIG",
            Category::Input => "INPUT",
            Category::Output => "OUTPUT",
            Category::BadArguments => "BAD_ARGUMENTS",
        }
    }
}

#[derive(Debug)]
pub struct Fail {
    pub category: Category,
    pub message: String,
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category.label(), self.message)
    }
}

pub fn config(message: impl Into<String>) -> Fail {
    Fail { category: Category::Config, message: message.into() }
}

pub fn input(message: impl Into<String>) -> Fail {
    Fail { category: Category::Input, message: message.into() }
}

pub fn output(message: impl Into<String>) -> Fail {
    Fail { category: Category::Output, message: message.into() }
}

pub fn bad_arguments(message: impl Into<String>) -> Fail {
    Fail { category: Category::BadArguments, message: message.into() }
}

impl From<CoreError> for Fail {
    fn from(e: CoreError) -> Fail {
        let category = match &e {
            CoreError::UnwritablePath { .. } => Category::Output,
            CoreError::InvalidConfig(_) => Category::Config,
            CoreError::UnreadableFile { .. }
            | CoreError::SourceMismatch { .. }
            | CoreError::MalformedPopulationTable { .. } => Category::Input,
        };
        Fail { category, message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Fail>;
