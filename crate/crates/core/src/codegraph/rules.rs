use glob::Pattern;

use crate::error::{Error, Result};

use super::NodeKind;

const DEFAULT_EDIT_WINDOW_MS: i64 = 24 * 60 * 60 * 1000;

/// Path classification and stat-window rules derived from the engine config.
#[derive(Clone, Debug)]
pub struct GraphRules {
    include: Vec<Pattern>,
    test_dirs: Vec<String>,
    test_globs: Vec<Pattern>,
    pub edit_window_ms: i64,
}

impl GraphRules {
    pub fn new(include: &[String], test_dirs: &[String], test_globs: &[String]) -> Result<Self> {
        let compile = |globs: &[String]| -> Result<Vec<Pattern>> {
            globs
                .iter()
                .map(|g| Pattern::new(g).map_err(|e| Error::Config(format!("glob {g:?}: {e}"))))
                .collect()
        };
        Ok(GraphRules {
            include: compile(include)?,
            test_dirs: test_dirs.to_vec(),
            test_globs: compile(test_globs)?,
            edit_window_ms: DEFAULT_EDIT_WINDOW_MS,
        })
    }

    pub fn with_edit_window(mut self, ms: i64) -> Self {
        self.edit_window_ms = ms;
        self
    }

    fn file_name(path: &str) -> &str {
        path.rsplit('/').next().unwrap_or(path)
    }

    pub fn is_included(&self, path: &str) -> bool {
        let name = Self::file_name(path);
        self.include.iter().any(|p| p.matches(name))
    }

    pub fn kind_of(&self, path: &str) -> NodeKind {
        let in_test_dir = path
            .split('/')
            .any(|seg| self.test_dirs.iter().any(|d| d == seg));
        let name = Self::file_name(path);
        if in_test_dir || self.test_globs.iter().any(|p| p.matches(name)) {
            NodeKind::Test
        } else {
            NodeKind::Source
        }
    }
}

impl Default for GraphRules {
    fn default() -> Self {
        crate::config::EngineConfig::default()
            .graph_rules()
            .expect("default globs compile")
    }
}
