//! Penn-style bracketed tree reader and writer.

use super::{Corpus, Tree, TreebankError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    End,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut atom = String::new();
    let mut atom_pos = (0, 0);
    let (mut line, mut col) = (1usize, 1usize);

    let flush = |atom: &mut String, pos: (usize, usize), out: &mut Vec<Spanned>| {
        if !atom.is_empty() {
            out.push(Spanned {
                tok: Tok::Atom(std::mem::take(atom)),
                line: pos.0,
                col: pos.1,
            });
        }
    };

    for ch in text.chars() {
        match ch {
            '(' | ')' => {
                flush(&mut atom, atom_pos, &mut out);
                out.push(Spanned {
                    tok: if ch == '(' { Tok::Open } else { Tok::Close },
                    line,
                    col,
                });
            }
            c if c.is_whitespace() => flush(&mut atom, atom_pos, &mut out),
            c => {
                if atom.is_empty() {
                    atom_pos = (line, col);
                }
                atom.push(c);
            }
        }
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    flush(&mut atom, atom_pos, &mut out);
    out.push(Spanned {
        tok: Tok::End,
        line,
        col,
    });
    out
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn at_end(&self) -> bool {
        self.peek().tok == Tok::End
    }

    fn err(&self, at: &Spanned, msg: impl Into<String>) -> TreebankError {
        TreebankError::Parse {
            line: at.line,
            col: at.col,
            msg: msg.into(),
        }
    }

    /// Parses `( label child+ )`; the opening paren has not been consumed.
    fn node(&mut self) -> Result<Tree, TreebankError> {
        let open = self.peek().clone();
        debug_assert_eq!(open.tok, Tok::Open);
        self.pos += 1;

        let mut label = None;
        if let Tok::Atom(a) = &self.peek().tok {
            label = Some(a.clone());
            self.pos += 1;
        }

        let mut children = Vec::new();
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::End => {
                    return Err(self.err(&t, "unexpected end of input: unbalanced parentheses"));
                }
                Tok::Close => {
                    self.pos += 1;
                    break;
                }
                Tok::Open => children.push(self.node()?),
                Tok::Atom(a) => {
                    self.pos += 1;
                    children.push(Tree::leaf(a));
                }
            }
        }

        match (label, children.len()) {
            (_, 0) => Err(self.err(&open, "empty node")),
            (Some(l), _) => Ok(Tree::node(l, children)),
            // unlabelled wrapper around a single tree, as in `( (S ...) )`
            (None, 1) if !children[0].is_leaf() => Ok(children.pop().unwrap()),
            (None, _) => Err(self.err(&open, "node without a label")),
        }
    }
}

/// Reads every tree in `text`, in order. Tree ids are 1-based positions.
pub fn read_bracketed(text: &str) -> Result<Corpus, TreebankError> {
    let mut p = Parser {
        toks: tokenize(text),
        pos: 0,
    };
    let mut trees = Vec::new();
    while !p.at_end() {
        let t = p.peek().clone();
        match t.tok {
            Tok::Open => trees.push(p.node()?),
            Tok::Close => return Err(p.err(&t, "unbalanced ')'")),
            Tok::Atom(ref a) => return Err(p.err(&t, format!("expected '(' but found `{a}`"))),
            Tok::End => unreachable!(),
        }
    }
    Ok(Corpus::new(trees))
}

/// One tree per line.
pub fn write_bracketed(corpus: &Corpus) -> String {
    let mut out = String::new();
    for t in corpus.trees() {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}
