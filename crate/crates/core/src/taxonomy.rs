//! Class hierarchies in an indentation-tree text format.
//!
//! ```text
//! # comment
//! Agricultural areas
//!   Crops
//!     Sugarcane
//! ```
//!
//! Each line is `2·depth` spaces followed by a class name; depth 0 is the
//! coarsest level and every line's parent is the closest preceding line one
//! level up. Blank lines and lines starting with `#` are ignored. Every branch
//! must reach the same depth, whose classes form the leaf level.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Bundled illustrative hierarchy over the eleven Reunion island land cover
/// classes. The intermediate groupings are a reconstruction.
pub const REUNION_TAXONOMY: &str = include_str!("../data/reunion_taxonomy.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Taxonomy {
    levels: Vec<Vec<String>>,
    /// `parents[k][i]` is the index at level `k-1` of class `i` at level `k`;
    /// `parents[0]` is empty.
    parents: Vec<Vec<usize>>,
}

/// Class indices of one sample from the coarsest level to the leaf level.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelChain(pub Vec<usize>);

impl LabelChain {
    pub fn at(&self, level: usize) -> usize {
        self.0[level]
    }

    pub fn leaf(&self) -> usize {
        *self.0.last().expect("non-empty chain")
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl Taxonomy {
    pub fn reunion() -> Self {
        Taxonomy::parse(REUNION_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut levels: Vec<Vec<String>> = Vec::new();
        let mut parents: Vec<Vec<usize>> = Vec::new();
        // class index per level along the current root-to-line path
        let mut path: Vec<usize> = Vec::new();
        let mut lines_of: Vec<Vec<usize>> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end();
            let trimmed = line.trim_start_matches(' ');
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if trimmed.starts_with('\t') {
                return Err(parse_err(lineno, "tabs are not allowed in indentation"));
            }
            let indent = line.len() - trimmed.len();
            if indent % 2 != 0 {
                return Err(parse_err(lineno, format!("odd indentation of {indent} spaces")));
            }
            let depth = indent / 2;
            if depth > path.len() {
                return Err(parse_err(
                    lineno,
                    format!("orphan class '{trimmed}': no parent at level {}", depth.saturating_sub(1)),
                ));
            }
            path.truncate(depth);
            let name = trimmed.to_string();

            if depth == levels.len() {
                levels.push(Vec::new());
                parents.push(Vec::new());
                lines_of.push(Vec::new());
            }
            for (lvl, &idx) in path.iter().enumerate() {
                if levels[lvl][idx] == name {
                    return Err(parse_err(
                        lineno,
                        format!("cycle: '{name}' is its own ancestor at level {lvl}"),
                    ));
                }
            }
            if let Some(existing) = levels[depth].iter().position(|n| *n == name) {
                let first = lines_of[depth][existing];
                let msg = if depth > 0 && parents[depth][existing] != path[depth - 1] {
                    format!(
                        "class '{name}' listed under two parents ('{}' at line {first}, '{}')",
                        levels[depth - 1][parents[depth][existing]],
                        levels[depth - 1][path[depth - 1]]
                    )
                } else {
                    format!("duplicate class '{name}' at level {depth} (first at line {first})")
                };
                return Err(parse_err(lineno, msg));
            }
            levels[depth].push(name);
            lines_of[depth].push(lineno);
            if depth > 0 {
                parents[depth].push(path[depth - 1]);
            }
            path.push(levels[depth].len() - 1);
        }

        if levels.is_empty() {
            return Err(parse_err(0, "taxonomy is empty"));
        }
        // every non-leaf class needs at least one child
        for k in 0..levels.len() - 1 {
            for (idx, name) in levels[k].iter().enumerate() {
                if !parents[k + 1].contains(&idx) {
                    return Err(parse_err(
                        lines_of[k][idx],
                        format!(
                            "class '{name}' stops at level {k} but the leaf level is {}",
                            levels.len() - 1
                        ),
                    ));
                }
            }
        }
        Ok(Taxonomy { levels, parents })
    }

    /// Writes the hierarchy back in the indentation format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_children(&mut out, 0, None);
        out
    }

    fn write_children(&self, out: &mut String, level: usize, parent: Option<usize>) {
        if level >= self.levels.len() {
            return;
        }
        for (idx, name) in self.levels[level].iter().enumerate() {
            if level > 0 && Some(self.parents[level][idx]) != parent {
                continue;
            }
            let _ = writeln!(out, "{}{}", "  ".repeat(level), name);
            self.write_children(out, level + 1, Some(idx));
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn leaf_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level_class_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn classes(&self, level: usize) -> &[String] {
        &self.levels[level]
    }

    pub fn leaf_classes(&self) -> &[String] {
        &self.levels[self.leaf_level()]
    }

    pub fn class_index(&self, level: usize, name: &str) -> Option<usize> {
        self.levels.get(level)?.iter().position(|n| n == name)
    }

    pub fn leaf_index(&self, name: &str) -> Option<usize> {
        self.class_index(self.leaf_level(), name)
    }

    /// Parent index at `level - 1`, or `None` at level 0.
    pub fn parent(&self, level: usize, class: usize) -> Option<usize> {
        if level == 0 {
            None
        } else {
            self.parents.get(level)?.get(class).copied()
        }
    }

    /// Ancestor at `level` of leaf class `leaf`.
    pub fn project_label(&self, leaf: usize, level: usize) -> Result<usize> {
        let leaf_level = self.leaf_level();
        if level > leaf_level {
            return Err(Error::usage(format!(
                "level {level} is deeper than the leaf level {leaf_level}"
            )));
        }
        if leaf >= self.levels[leaf_level].len() {
            return Err(Error::usage(format!(
                "leaf class {leaf} out of range ({} leaf classes)",
                self.levels[leaf_level].len()
            )));
        }
        let mut class = leaf;
        for k in (level + 1..=leaf_level).rev() {
            class = self.parents[k][class];
        }
        Ok(class)
    }

    pub fn label_chain(&self, leaf: usize) -> Result<LabelChain> {
        (0..self.depth())
            .map(|k| self.project_label(leaf, k))
            .collect::<Result<Vec<_>>>()
            .map(LabelChain)
    }
}
