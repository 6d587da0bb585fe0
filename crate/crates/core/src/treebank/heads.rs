use std::collections::HashMap;

use super::TreebankError;

/// Search direction for a head rule. It is also the fallback: `Left`
/// falls back to the leftmost child, `Right` to the rightmost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadRule {
    pub direction: Direction,
    pub preferences: Vec<String>,
}

/// Head-child selection table keyed by parent label.
///
/// Parents without an entry use the default rule: the leftmost child whose
/// label equals the parent's, otherwise the rightmost child.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeadRules {
    table: HashMap<String, HeadRule>,
}

impl HeadRules {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, parent: impl Into<String>, rule: HeadRule) {
        self.table.insert(parent.into(), rule);
    }

    pub fn get(&self, parent: &str) -> Option<&HeadRule> {
        self.table.get(parent)
    }

    /// Parses lines of the form `PARENT: left|right LABEL1 LABEL2 ...`.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, TreebankError> {
        let mut rules = HeadRules::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| TreebankError::HeadRules {
                line: i + 1,
                msg: msg.to_string(),
            };
            let (parent, rest) = line.split_once(':').ok_or_else(|| bad("missing ':'"))?;
            let parent = parent.trim();
            if parent.is_empty() {
                return Err(bad("empty parent label"));
            }
            let mut fields = rest.split_whitespace();
            let direction = match fields.next() {
                Some("left") => Direction::Left,
                Some("right") => Direction::Right,
                Some(other) => return Err(bad(&format!("direction must be `left` or `right`, got `{other}`"))),
                None => return Err(bad("missing direction")),
            };
            rules.insert(
                parent,
                HeadRule {
                    direction,
                    preferences: fields.map(str::to_owned).collect(),
                },
            );
        }
        Ok(rules)
    }

    /// Index of the head child among `children`.
    ///
    /// # Panics
    /// If `children` is empty.
    pub fn head_index<S: AsRef<str>>(&self, parent: &str, children: &[S]) -> usize {
        assert!(!children.is_empty(), "head of an empty child list");
        let n = children.len();
        match self.table.get(parent) {
            Some(rule) => {
                let find = |pref: &str| match rule.direction {
                    Direction::Left => children.iter().position(|c| c.as_ref() == pref),
                    Direction::Right => children.iter().rposition(|c| c.as_ref() == pref),
                };
                if let Some(i) = rule.preferences.iter().find_map(|p| find(p)) {
                    return i;
                }
                match rule.direction {
                    Direction::Left => 0,
                    Direction::Right => n - 1,
                }
            }
            None => children.iter().position(|c| c.as_ref() == parent).unwrap_or(n - 1),
        }
    }
}
