//! Head-driven binarization and its inverse.
//!
//! A local tree `P -> C1 .. Cn` with head `Ch` and `n > 2` is rebuilt by
//! joining the head with each right sibling in turn, then joining the result
//! with each left sibling, innermost first. Every introduced node is
//! labelled with its head-containing child's label plus a suffix: `<m>2`
//! when the head is in the left child, `<m>1` when it is in the right child,
//! where `<m>` is the configured marker. The last join keeps the label `P`.

use super::{HeadRules, Tree};

pub const DEFAULT_MARKER: char = '^';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binarizer {
    marker: char,
}

impl Default for Binarizer {
    fn default() -> Self {
        Binarizer { marker: DEFAULT_MARKER }
    }
}

impl Binarizer {
    pub fn with_marker(marker: char) -> Self {
        Binarizer { marker }
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    /// True if `label` carries a binarization suffix.
    pub fn is_introduced(&self, label: &str) -> bool {
        let mut it = label.chars().rev();
        matches!(
            (it.next(), it.next(), it.next()),
            (Some('1' | '2'), Some(m), Some(_)) if m == self.marker
        )
    }

    fn suffixed(&self, label: &str, head_left: bool) -> String {
        format!("{}{}{}", label, self.marker, if head_left { '2' } else { '1' })
    }

    pub fn binarize(&self, t: &Tree, rules: &HeadRules) -> Tree {
        if t.is_leaf() {
            return t.clone();
        }
        let children: Vec<Tree> = t.children().iter().map(|c| self.binarize(c, rules)).collect();
        let n = children.len();
        if n <= 2 {
            return Tree::node(t.label(), children);
        }
        let labels: Vec<&str> = t.children().iter().map(Tree::label).collect();
        let head = rules.head_index(t.label(), &labels);

        let mut left: Vec<Tree> = children;
        let right = left.split_off(head + 1);
        let mut cur = left.pop().expect("head child");
        let mut joins = right.len() + left.len();

        for sib in right {
            joins -= 1;
            let label = if joins == 0 {
                t.label().to_owned()
            } else {
                self.suffixed(cur.label(), true)
            };
            cur = Tree::node(label, vec![cur, sib]);
        }
        while let Some(sib) = left.pop() {
            joins -= 1;
            let label = if joins == 0 {
                t.label().to_owned()
            } else {
                self.suffixed(cur.label(), false)
            };
            cur = Tree::node(label, vec![sib, cur]);
        }
        cur
    }

    /// Splices out every introduced internal node below the root.
    pub fn debinarize(&self, t: &Tree) -> Tree {
        if t.is_leaf() {
            return t.clone();
        }
        let mut children = Vec::with_capacity(t.children().len());
        for c in t.children() {
            let d = self.debinarize(c);
            if !d.is_leaf() && self.is_introduced(d.label()) {
                children.extend(d.into_parts().1);
            } else {
                children.push(d);
            }
        }
        Tree::node(t.label(), children)
    }
}

/// [`Binarizer::binarize`] with the default marker.
pub fn binarize(t: &Tree, rules: &HeadRules) -> Tree {
    Binarizer::default().binarize(t, rules)
}

/// [`Binarizer::debinarize`] with the default marker.
pub fn debinarize(t: &Tree) -> Tree {
    Binarizer::default().debinarize(t)
}
