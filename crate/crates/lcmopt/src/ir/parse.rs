//! Text format parser.
//!
//! ```text
//! module := func*
//! func   := "func" "@" id "(" [ "%" id { "," "%" id } ] ")" "{" block+ "}"
//! block  := id ":" instr* term
//! instr  := "%" id "=" expr | "store" opnd "," opnd | "print" opnd
//! expr   := binop opnd "," opnd | "cmp" cc opnd "," opnd
//!         | "phi" "[" id ":" opnd { "," id ":" opnd } "]"
//!         | "const" int | "opaque" | "alloca" | "load" opnd
//! term   := "jmp" id | "br" opnd "," id "," id | "ret" opnd
//! opnd   := "%" id | int
//! ```
//!
//! `//` starts a comment running to end of line. Identifiers match
//! `[A-Za-z_][A-Za-z0-9_.]*`. Keywords are contextual, so `store: ...` is a
//! block label while `store %v, %p` is an instruction.

use super::{BinOp, Block, CmpCc, Function, Instr, Module, Operand};
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Percent,
    At,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Assign,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Percent => write!(f, "`%`"),
            Tok::At => write!(f, "`@`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    /// Next token plus the position where it starts.
    fn next_tok(&mut self) -> Result<(Tok, usize, usize), ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let tok = match self.peek() {
            None => Tok::Eof,
            Some(b'%') => {
                self.bump();
                Tok::Percent
            }
            Some(b'@') => {
                self.bump();
                Tok::At
            }
            Some(b'(') => {
                self.bump();
                Tok::LParen
            }
            Some(b')') => {
                self.bump();
                Tok::RParen
            }
            Some(b'{') => {
                self.bump();
                Tok::LBrace
            }
            Some(b'}') => {
                self.bump();
                Tok::RBrace
            }
            Some(b'[') => {
                self.bump();
                Tok::LBracket
            }
            Some(b']') => {
                self.bump();
                Tok::RBracket
            }
            Some(b':') => {
                self.bump();
                Tok::Colon
            }
            Some(b',') => {
                self.bump();
                Tok::Comma
            }
            Some(b'=') => {
                self.bump();
                Tok::Assign
            }
            Some(c) if c == b'-' || c.is_ascii_digit() => {
                let mut text = String::new();
                if c == b'-' {
                    text.push('-');
                    self.bump();
                    if !matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                        return Err(self.err("expected digits after `-`"));
                    }
                }
                while let Some(d) = self.peek() {
                    if d.is_ascii_digit() {
                        text.push(d as char);
                        self.bump();
                    } else {
                        break;
                    }
                }
                let v: i64 = text.parse().map_err(|_| ParseError {
                    line,
                    col,
                    message: format!("integer literal `{text}` out of i64 range"),
                })?;
                Tok::Int(v)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let mut text = String::new();
                while let Some(d) = self.peek() {
                    if d.is_ascii_alphanumeric() || d == b'_' || d == b'.' {
                        text.push(d as char);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(text)
            }
            Some(c) => {
                return Err(self.err(format!("unexpected character `{}`", c as char)));
            }
        };
        Ok((tok, line, col))
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = self.toks[self.pos];
        (l, c)
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(format!("expected {}, found {}", want, self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.err_here(format!("expected {what}, found {other}"))),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        match *self.peek() {
            Tok::Int(v) => {
                self.next();
                Ok(v)
            }
            ref other => Err(self.err_here(format!("expected integer, found {other}"))),
        }
    }

    /// `%name` or integer literal.
    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek().clone() {
            Tok::Percent => {
                self.next();
                Ok(Operand::Name(self.ident("value name")?))
            }
            Tok::Int(v) => {
                self.next();
                Ok(Operand::Lit(v))
            }
            other => Err(self.err_here(format!("expected operand, found {other}"))),
        }
    }

    fn value_name(&mut self) -> Result<String, ParseError> {
        self.expect(Tok::Percent)?;
        self.ident("value name")
    }
}

fn bin_op(name: &str) -> Option<BinOp> {
    Some(match name {
        "add" => BinOp::Add,
        "sub" => BinOp::Sub,
        "mul" => BinOp::Mul,
        "div" => BinOp::Div,
        "and" => BinOp::And,
        "or" => BinOp::Or,
        "xor" => BinOp::Xor,
        _ => return None,
    })
}

fn cmp_cc(name: &str) -> Option<CmpCc> {
    Some(match name {
        "eq" => CmpCc::Eq,
        "ne" => CmpCc::Ne,
        "lt" => CmpCc::Lt,
        "le" => CmpCc::Le,
        "gt" => CmpCc::Gt,
        "ge" => CmpCc::Ge,
        _ => return None,
    })
}

pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    loop {
        let t = lexer.next_tok()?;
        let done = t.0 == Tok::Eof;
        toks.push(t);
        if done {
            break;
        }
    }
    let mut p = Parser { toks, pos: 0 };
    let mut module = Module::default();
    while *p.peek() != Tok::Eof {
        module.functions.push(parse_function(&mut p)?);
    }
    for f in &module.functions {
        check_labels(f)?;
    }
    Ok(module)
}

fn parse_function(p: &mut Parser) -> Result<Function, ParseError> {
    let kw = p.ident("`func`")?;
    if kw != "func" {
        return Err(p.err_here(format!("expected `func`, found `{kw}`")));
    }
    p.expect(Tok::At)?;
    let name = p.ident("function name")?;
    p.expect(Tok::LParen)?;
    let mut params = Vec::new();
    if *p.peek() != Tok::RParen {
        loop {
            params.push(p.value_name()?);
            if *p.peek() == Tok::Comma {
                p.next();
            } else {
                break;
            }
        }
    }
    p.expect(Tok::RParen)?;
    p.expect(Tok::LBrace)?;

    let mut defined: HashSet<String> = HashSet::new();
    for param in &params {
        if !defined.insert(param.clone()) {
            return Err(p.err_here(format!("duplicate parameter `%{param}`")));
        }
    }

    let mut blocks = Vec::new();
    let mut seen_labels: HashSet<String> = HashSet::new();
    while *p.peek() != Tok::RBrace {
        blocks.push(parse_block(p, &mut defined, &mut seen_labels)?);
    }
    if blocks.is_empty() {
        return Err(p.err_here("function has no blocks"));
    }
    p.expect(Tok::RBrace)?;
    Ok(Function {
        name,
        params,
        blocks,
    })
}

fn parse_block(
    p: &mut Parser,
    defined: &mut HashSet<String>,
    seen_labels: &mut HashSet<String>,
) -> Result<Block, ParseError> {
    let label = p.ident("block label")?;
    if !seen_labels.insert(label.clone()) {
        return Err(p.err_here(format!("duplicate block label `{label}`")));
    }
    p.expect(Tok::Colon)?;
    let mut block = Block::new(label);
    loop {
        // A bare identifier followed by `:` starts the next block.
        if matches!(p.peek(), Tok::Ident(_)) && *p.peek2() == Tok::Colon {
            break;
        }
        match p.peek().clone() {
            Tok::RBrace => break,
            Tok::Percent => {
                let result = p.value_name()?;
                if !defined.insert(result.clone()) {
                    return Err(p.err_here(format!("duplicate SSA definition of `%{result}`")));
                }
                p.expect(Tok::Assign)?;
                let ins = parse_value_instr(p, result)?;
                if matches!(ins, Instr::Phi { .. }) {
                    if !block.body.is_empty() {
                        return Err(p.err_here("phi after non-phi instruction"));
                    }
                    block.phis.push(ins);
                } else {
                    block.body.push(ins);
                }
            }
            Tok::Ident(kw) => match kw.as_str() {
                "store" => {
                    p.next();
                    let value = p.operand()?;
                    p.expect(Tok::Comma)?;
                    let addr = p.operand()?;
                    block.body.push(Instr::Store { value, addr });
                }
                "print" => {
                    p.next();
                    let value = p.operand()?;
                    block.body.push(Instr::Print { value });
                }
                "jmp" => {
                    p.next();
                    let target = p.ident("block label")?;
                    block.terminator = Some(Instr::Jmp { target });
                    break;
                }
                "br" => {
                    p.next();
                    let cond = p.operand()?;
                    p.expect(Tok::Comma)?;
                    let then_target = p.ident("block label")?;
                    p.expect(Tok::Comma)?;
                    let else_target = p.ident("block label")?;
                    block.terminator = Some(Instr::Br {
                        cond,
                        then_target,
                        else_target,
                    });
                    break;
                }
                "ret" => {
                    p.next();
                    let value = p.operand()?;
                    block.terminator = Some(Instr::Ret { value });
                    break;
                }
                other => {
                    return Err(p.err_here(format!("expected instruction, found `{other}`")));
                }
            },
            other => {
                return Err(p.err_here(format!("expected instruction, found {other}")));
            }
        }
    }
    if block.terminator.is_none() {
        return Err(p.err_here(format!("block `{}` has no terminator", block.label)));
    }
    Ok(block)
}

fn parse_value_instr(p: &mut Parser, result: String) -> Result<Instr, ParseError> {
    let op = p.ident("opcode")?;
    if let Some(op) = bin_op(&op) {
        let lhs = p.operand()?;
        p.expect(Tok::Comma)?;
        let rhs = p.operand()?;
        return Ok(Instr::Bin {
            result,
            op,
            lhs,
            rhs,
        });
    }
    match op.as_str() {
        "cmp" => {
            let cc_name = p.ident("comparison condition")?;
            let cc = cmp_cc(&cc_name)
                .ok_or_else(|| p.err_here(format!("unknown comparison `{cc_name}`")))?;
            let lhs = p.operand()?;
            p.expect(Tok::Comma)?;
            let rhs = p.operand()?;
            Ok(Instr::Cmp {
                result,
                cc,
                lhs,
                rhs,
            })
        }
        "const" => Ok(Instr::Const {
            result,
            value: p.int()?,
        }),
        "opaque" => Ok(Instr::Opaque { result }),
        "alloca" => Ok(Instr::Alloca { result }),
        "load" => Ok(Instr::Load {
            result,
            addr: p.operand()?,
        }),
        "phi" => {
            p.expect(Tok::LBracket)?;
            let mut incomings = Vec::new();
            loop {
                let label = p.ident("predecessor label")?;
                p.expect(Tok::Colon)?;
                let value = p.operand()?;
                incomings.push((label, value));
                if *p.peek() == Tok::Comma {
                    p.next();
                } else {
                    break;
                }
            }
            p.expect(Tok::RBracket)?;
            Ok(Instr::Phi { result, incomings })
        }
        other => Err(p.err_here(format!("unknown opcode `{other}`"))),
    }
}

/// Every label referenced by a terminator or phi must name a block.
fn check_labels(f: &Function) -> Result<(), ParseError> {
    let labels = f.block_labels();
    for b in &f.blocks {
        for target in b.successor_labels() {
            if !labels.contains(target) {
                return Err(ParseError {
                    line: 0,
                    col: 0,
                    message: format!(
                        "function @{}: block `{}` references unknown label `{}`",
                        f.name, b.label, target
                    ),
                });
            }
        }
        for phi in &b.phis {
            if let Instr::Phi { incomings, .. } = phi {
                for (label, _) in incomings {
                    if !labels.contains(label.as_str()) {
                        return Err(ParseError {
                            line: 0,
                            col: 0,
                            message: format!(
                                "function @{}: phi in `{}` references unknown label `{}`",
                                f.name, b.label, label
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_diamond() {
        let text = "
func @f1(%a, %b) {
entry:
  %t = opaque
  br %t, bbT, bbF
bbT:
  %x1 = add %a, %b
  jmp join
bbF:
  %x0 = const 0
  jmp join
join:
  %x = phi [bbT: %x1, bbF: %x0]
  %y = add %a, %b
  print %x
  print %y
  ret %y
}
";
        let m = parse_module(text).unwrap();
        assert_eq!(m.functions.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.name, "f1");
        assert_eq!(f.params, vec!["a", "b"]);
        assert_eq!(f.blocks.len(), 4);
        assert_eq!(f.blocks[3].phis.len(), 1);
        assert_eq!(f.blocks[3].body.len(), 3);
    }

    #[test]
    fn duplicate_def_rejected() {
        let text = "func @f(%a) { e: %x = add %a, 1\n %x = add %a, 2\n ret %x }";
        let err = parse_module(text).unwrap_err();
        assert!(err.message.contains("duplicate SSA definition"), "{err}");
    }

    #[test]
    fn unknown_label_rejected() {
        let text = "func @f(%a) { e: jmp nowhere }";
        let err = parse_module(text).unwrap_err();
        assert!(err.message.contains("unknown label"), "{err}");
    }

    #[test]
    fn duplicated_branch_target_is_two_edges() {
        let text = "func @f(%c) { e: br %c, b1, b1\n b1: ret 0 }";
        let m = parse_module(text).unwrap();
        let succs = m.functions[0].blocks[0].successor_labels();
        assert_eq!(succs, vec!["b1", "b1"]);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_module("func @f() {\ne: %x = bogus 1, 2\n ret %x }").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("bogus"));
    }

    #[test]
    fn negative_literals_and_comments() {
        let text = "// leading comment\nfunc @f() { e: %x = add -5, -9223372036854775808 // trailing\n ret %x }";
        let m = parse_module(text).unwrap();
        match &m.functions[0].blocks[0].body[0] {
            Instr::Bin { lhs, rhs, .. } => {
                assert_eq!(*lhs, Operand::Lit(-5));
                assert_eq!(*rhs, Operand::Lit(i64::MIN));
            }
            other => panic!("unexpected instr {other:?}"),
        }
    }

    #[test]
    fn missing_terminator_rejected() {
        let err = parse_module("func @f() { e: %x = const 1 }").unwrap_err();
        assert!(err.message.contains("no terminator"), "{err}");
    }

    #[test]
    fn phi_after_body_rejected() {
        let text = "func @f(%c) { e: br %c, a, b\na: jmp c\nb: jmp c\nc: %x = const 1\n %p = phi [a: 1, b: 2]\n ret %p }";
        let err = parse_module(text).unwrap_err();
        assert!(err.message.contains("phi after non-phi"), "{err}");
    }
}
