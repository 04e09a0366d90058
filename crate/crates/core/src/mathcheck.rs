//! Syntax checking for KaTeX-convention LaTeX formulas.
//!
//! The checker is structural: it tokenizes the formula once and walks it with
//! a recursive stack machine that enforces balanced groups, environment
//! nesting, `\left`/`\right` pairing, argument counts for a fixed set of
//! commands and the placement of `&`, `\\` and `$`. Commands that are not in
//! the arity table are accepted as-is.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::docmodel::{AnnotationDoc, ElementKind, SampleRecord};
use crate::error::{Error, Result};
use crate::textfilter::{DecisionDetail, FilterDecision, Reason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormulaMode {
    Inline,
    Display,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormulaDefectKind {
    UnbalancedBraces,
    MismatchedEnvironment,
    UnknownEnvironment,
    DanglingLeftRight,
    BadArgumentCount,
    StrayDelimiter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FormulaDefect {
    pub kind: FormulaDefectKind,
    /// Byte offset into the delimiter-stripped formula source.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub valid: bool,
    pub defects: Vec<FormulaDefect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaSpanChecked {
    pub mode: FormulaMode,
    pub source: String,
    pub verdict: Option<ValidationResult>,
}

/// Environments listed in the formula generation prompts.
pub const PROMPT_ENVIRONMENTS: [&str; 16] = [
    "matrix",
    "array",
    "pmatrix",
    "bmatrix",
    "vmatrix",
    "Vmatrix",
    "Bmatrix",
    "cases",
    "rcases",
    "smallmatrix",
    "subarray",
    "equation",
    "split",
    "align",
    "gather",
    "alignat",
];

const EXTRA_ENVIRONMENTS: [&str; 22] = [
    "equation*",
    "align*",
    "aligned",
    "alignat*",
    "alignedat",
    "gather*",
    "gathered",
    "multline",
    "multline*",
    "darray",
    "dcases",
    "drcases",
    "matrix*",
    "pmatrix*",
    "bmatrix*",
    "Bmatrix*",
    "vmatrix*",
    "Vmatrix*",
    "CD",
    "split*",
    "flalign",
    "flalign*",
];

/// Environments that do not accept `&` column separators.
const NON_ALIGNING: [&str; 7] = [
    "equation",
    "equation*",
    "gather",
    "gather*",
    "gathered",
    "multline",
    "multline*",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvironmentInventory {
    names: BTreeSet<String>,
}

impl Default for EnvironmentInventory {
    fn default() -> Self {
        Self {
            names: PROMPT_ENVIRONMENTS
                .iter()
                .chain(EXTRA_ENVIRONMENTS.iter())
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl EnvironmentInventory {
    /// Prompt environments plus the given names. Blank lines and `#`
    /// comments are skipped.
    pub fn from_list(text: &str) -> Self {
        let mut names: BTreeSet<String> = PROMPT_ENVIRONMENTS.iter().map(|s| s.to_string()).collect();
        names.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        );
        Self { names }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_list(&text))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    fn aligning(name: &str) -> bool {
        !NON_ALIGNING.contains(&name)
    }
}

// ---------------------------------------------------------------------------
// Tokens

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    /// `\name`
    Word(String),
    /// `\` followed by one non-letter; `None` for a trailing backslash.
    Symbol(Option<char>),
    Open,
    Close,
    LBracket,
    RBracket,
    Dollar,
    Amp,
    Sup,
    Sub,
    Space,
    Char(char),
}

fn tokenize(src: &str) -> Vec<(Tok, usize)> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some((off, c)) = chars.next() {
        let tok = match c {
            '\\' => match chars.peek().copied() {
                Some((_, n)) if n.is_ascii_alphabetic() => {
                    let mut name = String::new();
                    while let Some((_, n)) = chars.peek().copied() {
                        if !n.is_ascii_alphabetic() {
                            break;
                        }
                        name.push(n);
                        chars.next();
                    }
                    Tok::Word(name)
                }
                Some((_, n)) => {
                    chars.next();
                    Tok::Symbol(Some(n))
                }
                None => Tok::Symbol(None),
            },
            '%' => {
                while let Some((_, n)) = chars.peek().copied() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
                Tok::Space
            }
            '{' => Tok::Open,
            '}' => Tok::Close,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '$' => Tok::Dollar,
            '&' => Tok::Amp,
            '^' => Tok::Sup,
            '_' => Tok::Sub,
            c if c.is_whitespace() => Tok::Space,
            c => Tok::Char(c),
        };
        out.push((tok, off));
    }
    out
}

/// Required arguments and whether an optional `[...]` argument may precede
/// them.
fn arity(command: &str) -> Option<(usize, bool)> {
    Some(match command {
        "frac" | "dfrac" | "tfrac" | "cfrac" | "binom" | "dbinom" | "tbinom" | "overset"
        | "underset" | "stackrel" | "textcolor" | "colorbox" => (2, false),
        "sqrt" | "xrightarrow" | "xleftarrow" => (1, true),
        "text" | "textbf" | "textit" | "textrm" | "textsf" | "texttt" | "textnormal"
        | "textup" | "mathrm" | "mathbf" | "mathit" | "mathbb" | "mathcal" | "mathfrak"
        | "mathsf" | "mathtt" | "mathscr" | "mathnormal" | "boldsymbol" | "bm"
        | "operatorname" | "hat" | "widehat" | "bar" | "overline" | "underline" | "vec"
        | "overrightarrow" | "overleftarrow" | "tilde" | "widetilde" | "dot" | "ddot"
        | "breve" | "check" | "acute" | "grave" | "mathring" | "overbrace" | "underbrace"
        | "boxed" | "cancel" | "bcancel" | "xcancel" | "phantom" | "hphantom" | "vphantom"
        | "mbox" | "hbox" | "fbox" | "color" | "pmb" => (1, false),
        _ => return None,
    })
}

const DELIMITER_WORDS: [&str; 32] = [
    "langle", "rangle", "lvert", "rvert", "lVert", "rVert", "vert", "Vert", "lfloor", "rfloor",
    "lceil", "rceil", "lbrace", "rbrace", "lbrack", "rbrack", "backslash", "uparrow",
    "downarrow", "updownarrow", "Uparrow", "Downarrow", "Updownarrow", "lgroup", "rgroup",
    "lmoustache", "rmoustache", "ulcorner", "urcorner", "llcorner", "lrcorner", "mid",
];

fn is_delimiter(tok: &Tok) -> bool {
    match tok {
        Tok::Char(c) => matches!(c, '(' | ')' | '|' | '/' | '<' | '>' | '.'),
        Tok::LBracket | Tok::RBracket => true,
        Tok::Symbol(Some(c)) => matches!(c, '{' | '}' | '|'),
        Tok::Word(w) => DELIMITER_WORDS.contains(&w.as_str()),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Checker

#[derive(Debug, Clone, PartialEq, Eq)]
enum FrameKind {
    Top,
    Group,
    Bracket,
    Env(String),
    Left,
}

#[derive(Debug, Clone)]
struct Frame {
    kind: FrameKind,
    aligning: bool,
    in_env: bool,
}

impl Frame {
    fn child(&self, kind: FrameKind) -> Frame {
        Frame {
            kind,
            aligning: self.aligning,
            in_env: self.in_env,
        }
    }
}

#[derive(Debug)]
enum Exit {
    /// The current frame was closed.
    Closed,
    Eof,
    /// `\end{name}` that the current frame cannot close.
    End(String, usize),
}

struct Checker<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
    mode: FormulaMode,
    inventory: &'a EnvironmentInventory,
    defects: Vec<FormulaDefect>,
}

impl Checker<'_> {
    fn defect(&mut self, kind: FormulaDefectKind, offset: usize) {
        self.defects.push(FormulaDefect { kind, offset });
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn skip_space(&mut self) {
        while matches!(self.toks.get(self.pos), Some((Tok::Space, _))) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn seq(&mut self, frame: &Frame) -> Exit {
        while let Some((tok, off)) = self.next() {
            if let Some(exit) = self.step(tok, off, frame) {
                return exit;
            }
        }
        Exit::Eof
    }

    /// Handles an exit bubbling up from a child frame that did not close it.
    fn after_child(&mut self, exit: Exit, frame: &Frame) -> Option<Exit> {
        match exit {
            Exit::Closed => None,
            Exit::Eof => Some(Exit::Eof),
            Exit::End(name, off) => self.on_end(name, off, frame),
        }
    }

    fn on_end(&mut self, name: String, off: usize, frame: &Frame) -> Option<Exit> {
        match &frame.kind {
            FrameKind::Env(open) => {
                if *open != name {
                    self.defect(FormulaDefectKind::MismatchedEnvironment, off);
                }
                Some(Exit::Closed)
            }
            FrameKind::Top => {
                self.defect(FormulaDefectKind::MismatchedEnvironment, off);
                None
            }
            _ => Some(Exit::End(name, off)),
        }
    }

    fn step(&mut self, tok: Tok, off: usize, frame: &Frame) -> Option<Exit> {
        match tok {
            Tok::Open => self.group(off, frame),
            Tok::Close => {
                if frame.kind == FrameKind::Group {
                    return Some(Exit::Closed);
                }
                self.defect(FormulaDefectKind::UnbalancedBraces, off);
                None
            }
            Tok::RBracket if frame.kind == FrameKind::Bracket => Some(Exit::Closed),
            Tok::Dollar => {
                self.defect(FormulaDefectKind::StrayDelimiter, off);
                None
            }
            Tok::Amp => {
                if !frame.aligning {
                    self.defect(FormulaDefectKind::StrayDelimiter, off);
                }
                None
            }
            Tok::Symbol(None) => {
                self.defect(FormulaDefectKind::StrayDelimiter, off);
                None
            }
            Tok::Symbol(Some('\\')) => {
                if self.mode == FormulaMode::Inline && !frame.in_env {
                    self.defect(FormulaDefectKind::StrayDelimiter, off);
                }
                None
            }
            Tok::Sup | Tok::Sub => self.arguments(off, 1, false, frame),
            Tok::Word(w) => match w.as_str() {
                "begin" => self.begin(off),
                "end" => match self.env_name(off)? {
                    Ok(name) => self.on_end(name, off, frame),
                    Err(()) => None,
                },
                "left" => self.left(off, frame),
                "right" => {
                    self.delimiter(off);
                    if frame.kind == FrameKind::Left {
                        Some(Exit::Closed)
                    } else {
                        self.defect(FormulaDefectKind::DanglingLeftRight, off);
                        None
                    }
                }
                "middle" => {
                    self.delimiter(off);
                    None
                }
                _ => match arity(&w) {
                    Some((n, optional)) => self.arguments(off, n, optional, frame),
                    None => None,
                },
            },
            _ => None,
        }
    }

    fn group(&mut self, open: usize, frame: &Frame) -> Option<Exit> {
        match self.seq(&frame.child(FrameKind::Group)) {
            Exit::Closed => None,
            Exit::Eof => {
                self.defect(FormulaDefectKind::UnbalancedBraces, self.len);
                Some(Exit::Eof)
            }
            end @ Exit::End(..) => {
                self.defect(FormulaDefectKind::UnbalancedBraces, open);
                self.after_child(end, frame)
            }
        }
    }

    /// Reads `{name}` after `\begin`/`\end`. The outer `None` means input
    /// ended; `Err` means the braces did not hold a plain name, in which case
    /// the cursor is left at the `{` so it parses as an ordinary group.
    fn env_name(&mut self, cmd: usize) -> Option<Result<String, ()>> {
        self.skip_space();
        match self.peek() {
            None => {
                self.defect(FormulaDefectKind::BadArgumentCount, cmd);
                return Some(Err(()));
            }
            Some((Tok::Open, _)) => {}
            Some(_) => {
                self.defect(FormulaDefectKind::BadArgumentCount, cmd);
                return Some(Err(()));
            }
        }
        let open_pos = self.pos;
        self.pos += 1;
        let mut name = String::new();
        loop {
            match self.next() {
                Some((Tok::Char(c), _)) if c.is_ascii_alphabetic() || c == '*' => name.push(c),
                Some((Tok::Close, _)) if !name.is_empty() => return Some(Ok(name)),
                _ => {
                    self.defect(FormulaDefectKind::UnknownEnvironment, cmd);
                    self.pos = open_pos;
                    return Some(Err(()));
                }
            }
        }
    }

    fn begin(&mut self, off: usize) -> Option<Exit> {
        let name = match self.env_name(off)? {
            Ok(name) => name,
            Err(()) => return None,
        };
        if !self.inventory.contains(&name) {
            self.defect(FormulaDefectKind::UnknownEnvironment, off);
        }
        let env = Frame {
            kind: FrameKind::Env(name.clone()),
            aligning: EnvironmentInventory::aligning(&name),
            in_env: true,
        };
        match self.seq(&env) {
            Exit::Closed => None,
            Exit::Eof => {
                self.defect(FormulaDefectKind::MismatchedEnvironment, self.len);
                Some(Exit::Eof)
            }
            Exit::End(..) => unreachable!("environment frames consume every \\end"),
        }
    }

    fn delimiter(&mut self, cmd: usize) {
        self.skip_space();
        match self.peek() {
            Some((tok, _)) if is_delimiter(tok) => self.pos += 1,
            _ => self.defect(FormulaDefectKind::DanglingLeftRight, cmd),
        }
    }

    fn left(&mut self, off: usize, frame: &Frame) -> Option<Exit> {
        self.delimiter(off);
        match self.seq(&frame.child(FrameKind::Left)) {
            Exit::Closed => None,
            Exit::Eof => {
                self.defect(FormulaDefectKind::DanglingLeftRight, off);
                Some(Exit::Eof)
            }
            end @ Exit::End(..) => {
                self.defect(FormulaDefectKind::DanglingLeftRight, off);
                self.after_child(end, frame)
            }
        }
    }

    fn arguments(&mut self, cmd: usize, n: usize, optional: bool, frame: &Frame) -> Option<Exit> {
        if optional {
            self.skip_space();
            if let Some((Tok::LBracket, _)) = self.peek() {
                self.pos += 1;
                match self.seq(&frame.child(FrameKind::Bracket)) {
                    Exit::Closed => {}
                    Exit::Eof => {
                        self.defect(FormulaDefectKind::BadArgumentCount, cmd);
                        return Some(Exit::Eof);
                    }
                    end @ Exit::End(..) => {
                        self.defect(FormulaDefectKind::BadArgumentCount, cmd);
                        return self.after_child(end, frame);
                    }
                }
            }
        }
        for _ in 0..n {
            self.skip_space();
            let Some((tok, off)) = self.peek().cloned() else {
                self.defect(FormulaDefectKind::BadArgumentCount, cmd);
                return None;
            };
            let usable = match &tok {
                Tok::Close | Tok::Amp | Tok::Dollar | Tok::Sup | Tok::Sub => false,
                Tok::Symbol(s) => !matches!(s, None | Some('\\')),
                Tok::Word(w) => !matches!(w.as_str(), "end" | "right" | "begin"),
                Tok::RBracket => frame.kind != FrameKind::Bracket,
                _ => true,
            };
            if !usable {
                self.defect(FormulaDefectKind::BadArgumentCount, cmd);
                return None;
            }
            self.pos += 1;
            if let Some(exit) = self.step(tok, off, frame) {
                return Some(exit);
            }
        }
        None
    }
}

pub fn formula_valid(source: &str, mode: FormulaMode, inventory: &EnvironmentInventory) -> ValidationResult {
    let mut checker = Checker {
        toks: tokenize(source),
        pos: 0,
        len: source.len(),
        mode,
        inventory,
        defects: Vec::new(),
    };
    let top = Frame {
        kind: FrameKind::Top,
        aligning: false,
        in_env: false,
    };
    // Top-level frames only finish at end of input.
    checker.seq(&top);
    ValidationResult {
        valid: checker.defects.is_empty(),
        defects: checker.defects,
    }
}

pub fn extract_formulas(doc: &AnnotationDoc) -> Vec<FormulaSpanChecked> {
    doc.spans()
        .filter_map(|(kind, src)| match kind {
            ElementKind::InlineFormula => Some(FormulaSpanChecked {
                mode: FormulaMode::Inline,
                source: src[1..src.len() - 1].to_string(),
                verdict: None,
            }),
            ElementKind::DisplayFormula => Some(FormulaSpanChecked {
                mode: FormulaMode::Display,
                source: src[2..src.len() - 2].to_string(),
                verdict: None,
            }),
            _ => None,
        })
        .collect()
}

pub fn check_formulas(doc: &AnnotationDoc, inventory: &EnvironmentInventory) -> Vec<FormulaSpanChecked> {
    let mut formulas = extract_formulas(doc);
    for f in &mut formulas {
        f.verdict = Some(formula_valid(&f.source, f.mode, inventory));
    }
    formulas
}

pub fn formula_filter_doc(sample_id: &str, doc: &AnnotationDoc, inventory: &EnvironmentInventory) -> FilterDecision {
    for (idx, f) in extract_formulas(doc).iter().enumerate() {
        if !formula_valid(&f.source, f.mode, inventory).valid {
            return FilterDecision::discard(
                sample_id,
                Reason::InvalidFormula,
                Some(DecisionDetail::ElementIndex(idx)),
            );
        }
    }
    FilterDecision::retain(sample_id, None)
}

pub fn formula_filter(sample: &SampleRecord, inventory: &EnvironmentInventory) -> FilterDecision {
    formula_filter_doc(&sample.sample_id, &sample.annotation, inventory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(src: &str) -> ValidationResult {
        formula_valid(src, FormulaMode::Display, &EnvironmentInventory::default())
    }

    fn kinds(src: &str) -> Vec<FormulaDefectKind> {
        check(src).defects.iter().map(|d| d.kind).collect()
    }

    #[test]
    fn frac_ok() {
        assert!(check(r"\frac{a}{b}").valid);
        assert!(check(r"\frac ab").valid);
        assert!(check(r"\frac\alpha\beta").valid);
    }

    #[test]
    fn unbalanced_at_end() {
        let r = check(r"\frac{a}{b");
        assert!(!r.valid);
        assert_eq!(
            r.defects,
            vec![FormulaDefect {
                kind: FormulaDefectKind::UnbalancedBraces,
                offset: 10
            }]
        );
    }

    #[test]
    fn stray_close_brace() {
        assert_eq!(kinds("a}b"), vec![FormulaDefectKind::UnbalancedBraces]);
        assert_eq!(check("a}b").defects[0].offset, 1);
    }

    #[test]
    fn mismatched_environment() {
        assert_eq!(
            kinds(r"\begin{pmatrix} a \end{bmatrix}"),
            vec![FormulaDefectKind::MismatchedEnvironment]
        );
        assert_eq!(kinds(r"\begin{pmatrix} a"), vec![FormulaDefectKind::MismatchedEnvironment]);
        assert_eq!(kinds(r"a \end{pmatrix}"), vec![FormulaDefectKind::MismatchedEnvironment]);
    }

    #[test]
    fn unknown_environment() {
        assert_eq!(
            kinds(r"\begin{tabular}{cc} a & b \end{tabular}"),
            vec![FormulaDefectKind::UnknownEnvironment]
        );
        let inv = EnvironmentInventory::from_list("tabular\n");
        assert!(formula_valid(r"\begin{tabular}{cc} a & b \end{tabular}", FormulaMode::Display, &inv).valid);
        assert!(inv.contains("pmatrix"));
    }

    #[test]
    fn left_right() {
        assert!(check(r"\left( x \right)").valid);
        assert!(check(r"\left. x \right|").valid);
        assert!(check(r"\left\{ x \right\}").valid);
        assert!(check(r"\left\langle x \right\rangle").valid);
        assert_eq!(kinds(r"\left( x"), vec![FormulaDefectKind::DanglingLeftRight]);
        assert_eq!(kinds(r"x \right)"), vec![FormulaDefectKind::DanglingLeftRight]);
        assert_eq!(kinds(r"\left x \right)"), vec![FormulaDefectKind::DanglingLeftRight]);
        assert!(!check(r"{\left( x } \right)").valid);
    }

    #[test]
    fn argument_counts() {
        assert_eq!(kinds(r"\frac{a}"), vec![FormulaDefectKind::BadArgumentCount]);
        assert_eq!(kinds(r"{\frac{a}}"), vec![FormulaDefectKind::BadArgumentCount]);
        assert_eq!(kinds(r"\sqrt"), vec![FormulaDefectKind::BadArgumentCount]);
        assert!(check(r"\sqrt[3]{x}").valid);
        assert!(check(r"\sqrt{x}").valid);
        assert_eq!(kinds(r"\text"), vec![FormulaDefectKind::BadArgumentCount]);
        assert_eq!(kinds(r"x^"), vec![FormulaDefectKind::BadArgumentCount]);
        assert_eq!(kinds(r"x_}"), vec![FormulaDefectKind::BadArgumentCount, FormulaDefectKind::UnbalancedBraces]);
        assert!(check(r"x^2_i").valid);
        assert!(check(r"x^{2}").valid);
        assert!(check(r"x^\prime").valid);
    }

    #[test]
    fn ampersand_and_row_breaks() {
        assert_eq!(kinds("a & b"), vec![FormulaDefectKind::StrayDelimiter]);
        assert!(check(r"\begin{align} a &= b \\ c &= d \end{align}").valid);
        assert_eq!(
            kinds(r"\begin{gather} a & b \end{gather}"),
            vec![FormulaDefectKind::StrayDelimiter]
        );
        assert!(check(r"a \\ b").valid);
        let inline = formula_valid(r"a \\ b", FormulaMode::Inline, &EnvironmentInventory::default());
        assert_eq!(inline.defects[0].kind, FormulaDefectKind::StrayDelimiter);
        assert!(formula_valid(
            r"\begin{matrix} a \\ b \end{matrix}",
            FormulaMode::Inline,
            &EnvironmentInventory::default()
        )
        .valid);
    }

    #[test]
    fn stray_dollar() {
        assert_eq!(kinds("a $ b"), vec![FormulaDefectKind::StrayDelimiter]);
        assert!(check(r"a \$ b").valid);
    }

    #[test]
    fn unknown_commands_accepted() {
        assert!(check(r"\foo{x} \bar{y} \mathop{\rm lim}").valid);
    }

    #[test]
    fn extract_modes() {
        let doc = AnnotationDoc::parse("$a$ and $$b$$");
        let f = extract_formulas(&doc);
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].mode, f[0].source.as_str()), (FormulaMode::Inline, "a"));
        assert_eq!((f[1].mode, f[1].source.as_str()), (FormulaMode::Display, "b"));
        assert!(extract_formulas(&AnnotationDoc::parse("no formulas")).is_empty());
        assert!(extract_formulas(&AnnotationDoc::parse("<table><tr><td>$x$</td></tr></table>")).is_empty());
    }

    #[test]
    fn filter_decisions() {
        let inv = EnvironmentInventory::default();
        assert!(formula_filter_doc("s", &AnnotationDoc::parse("plain"), &inv).is_retained());
        assert!(formula_filter_doc("s", &AnnotationDoc::parse(r"$$\sum_{i=0}^{N-1} c_p^i$$"), &inv).is_retained());
        let d = formula_filter_doc("s", &AnnotationDoc::parse(r"ok $x$ then $\left( x$"), &inv);
        assert_eq!(d.reason, Reason::InvalidFormula);
        assert_eq!(d.detail, Some(DecisionDetail::ElementIndex(1)));
    }

    #[test]
    fn deterministic_offsets() {
        let src = r"\begin{array}{c} { \left( a \end{pmatrix} } }";
        assert_eq!(check(src), check(src));
        assert!(!check(src).valid);
    }
}
