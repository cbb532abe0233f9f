//! Hand-written tokenizer and recursive-descent parser for the supported
//! SQL subset:
//!
//! ```text
//! SELECT items FROM t [JOIN t ON a = b [AND c = d]* | , t]*
//!     [WHERE pred [AND pred]*] [GROUP BY cols] [LIMIT n] [;]
//! ```
//!
//! Parsing is followed by binding against a [`Database`] catalog, so the
//! returned AST always has fully qualified, type-checked column references.

use crate::error::{Error, Result};
use crate::relational::{ColumnType, Database, Value};

use super::{
    AggFunc, AggregateQuery, CmpOp, ColumnRef, JoinCondition, Predicate, PredicateOp, Projection,
    Query, SpjQuery,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn syntax(pos: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        pos,
        msg: msg.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '-' || c == '.') && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit());
        if starts_number {
            i += 1;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || bytes[i] == b'.'
                    || bytes[i] == b'e'
                    || bytes[i] == b'E'
                    || ((bytes[i] == b'-' || bytes[i] == b'+')
                        && matches!(bytes[i - 1], b'e' | b'E')))
            {
                i += 1;
            }
            let s = &text[start..i];
            let tok = if let Ok(v) = s.parse::<i64>() {
                Tok::Int(v)
            } else if let Ok(v) = s.parse::<f64>() {
                Tok::Real(v)
            } else {
                return Err(syntax(start, format!("malformed number {s:?}")));
            };
            out.push(Token { tok, pos: start });
            continue;
        }
        if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(syntax(start, "unterminated string literal")),
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = text[i..].chars().next().unwrap();
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos: start,
            });
            continue;
        }
        let two = text.get(i..i + 2).unwrap_or("");
        let sym: &'static str = match two {
            "<=" => "<=",
            ">=" => ">=",
            "<>" => "<>",
            "!=" => "<>",
            _ => match c {
                '=' => "=",
                '<' => "<",
                '>' => ">",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '*' => "*",
                '.' => ".",
                ';' => ";",
                _ => return Err(syntax(i, format!("unexpected character {c:?}"))),
            },
        };
        i += if sym.len() == 2 || two == "!=" { 2 } else { 1 };
        out.push(Token {
            tok: Tok::Sym(sym),
            pos: start,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct RawCol {
    table: Option<String>,
    column: String,
    pos: usize,
}

#[derive(Clone, Debug)]
enum RawItem {
    Star,
    Col(RawCol),
    Agg(AggFunc, Option<RawCol>, usize),
}

#[derive(Clone, Debug)]
enum RawOp {
    Cmp(CmpOp, Value),
    ColEq(RawCol),
    In(Vec<Value>),
    Between(Value, Value),
    Like(String),
}

#[derive(Clone, Debug)]
struct RawPred {
    col: RawCol,
    op: RawOp,
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
    end: usize,
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "JOIN", "ON", "AND", "OR", "NOT", "GROUP", "BY", "LIMIT", "IN",
    "BETWEEN", "LIKE", "INNER", "AS",
];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.pos)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {kw}")))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected '{s}'")))
        }
    }

    fn check_unsupported(&self) -> Result<()> {
        for kw in ["OR", "NOT"] {
            if self.is_kw(kw) {
                return Err(Error::Unsupported(format!(
                    "{kw} at position {}",
                    self.pos()
                )));
            }
        }
        Ok(())
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if !RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(syntax(self.pos(), "expected identifier")),
        }
    }

    fn column(&mut self) -> Result<RawCol> {
        let pos = self.pos();
        let first = self.ident()?;
        if self.eat_sym(".") {
            let column = self.ident()?;
            Ok(RawCol {
                table: Some(first),
                column,
                pos,
            })
        } else {
            Ok(RawCol {
                table: None,
                column: first,
                pos,
            })
        }
    }

    fn literal(&mut self) -> Result<Value> {
        let v = match self.peek() {
            Some(Tok::Int(v)) => Value::Int(*v),
            Some(Tok::Real(v)) => Value::Real(*v),
            Some(Tok::Str(s)) => Value::text(s),
            _ => return Err(syntax(self.pos(), "expected literal")),
        };
        self.i += 1;
        Ok(v)
    }

    fn select_item(&mut self) -> Result<RawItem> {
        if self.eat_sym("*") {
            return Ok(RawItem::Star);
        }
        let pos = self.pos();
        for (kw, f) in [
            ("COUNT", AggFunc::Count),
            ("SUM", AggFunc::Sum),
            ("AVG", AggFunc::Avg),
        ] {
            let next_is_paren = matches!(
                self.toks.get(self.i + 1).map(|t| &t.tok),
                Some(Tok::Sym("("))
            );
            if self.is_kw(kw) && next_is_paren {
                self.i += 2;
                let col = if self.eat_sym("*") {
                    if f != AggFunc::Count {
                        return Err(syntax(pos, format!("{kw}(*) is not allowed")));
                    }
                    None
                } else {
                    Some(self.column()?)
                };
                self.expect_sym(")")?;
                return Ok(RawItem::Agg(f, col, pos));
            }
        }
        Ok(RawItem::Col(self.column()?))
    }

    fn predicate(&mut self) -> Result<RawPred> {
        self.check_unsupported()?;
        let col = self.column()?;
        self.check_unsupported()?;
        let op_pos = self.pos();
        let op = if self.eat_kw("IN") {
            self.expect_sym("(")?;
            let mut vals = vec![self.literal()?];
            while self.eat_sym(",") {
                vals.push(self.literal()?);
            }
            self.expect_sym(")")?;
            RawOp::In(vals)
        } else if self.eat_kw("BETWEEN") {
            let lo = self.literal()?;
            self.expect_kw("AND")?;
            let hi = self.literal()?;
            RawOp::Between(lo, hi)
        } else if self.eat_kw("LIKE") {
            match self.literal()? {
                Value::Text(s) => RawOp::Like(s.to_string()),
                _ => return Err(syntax(op_pos, "LIKE needs a string pattern")),
            }
        } else {
            let cmp = match self.peek() {
                Some(Tok::Sym("=")) => CmpOp::Eq,
                Some(Tok::Sym("<>")) => CmpOp::Ne,
                Some(Tok::Sym("<")) => CmpOp::Lt,
                Some(Tok::Sym("<=")) => CmpOp::Le,
                Some(Tok::Sym(">")) => CmpOp::Gt,
                Some(Tok::Sym(">=")) => CmpOp::Ge,
                _ => return Err(syntax(op_pos, "expected comparison operator")),
            };
            self.i += 1;
            if matches!(self.peek(), Some(Tok::Ident(_))) {
                if cmp != CmpOp::Eq {
                    return Err(Error::Unsupported(format!(
                        "non-equality column comparison at position {op_pos}"
                    )));
                }
                RawOp::ColEq(self.column()?)
            } else {
                RawOp::Cmp(cmp, self.literal()?)
            }
        };
        Ok(RawPred { col, op })
    }
}

struct RawQuery {
    items: Vec<RawItem>,
    tables: Vec<(String, usize)>,
    joins: Vec<(RawCol, RawCol)>,
    preds: Vec<RawPred>,
    group_by: Vec<RawCol>,
    limit: Option<usize>,
}

fn parse_raw(text: &str) -> Result<RawQuery> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        i: 0,
        end: text.len(),
    };
    p.expect_kw("SELECT")?;
    if p.is_kw("DISTINCT") {
        return Err(Error::Unsupported("DISTINCT".into()));
    }
    let mut items = vec![p.select_item()?];
    while p.eat_sym(",") {
        items.push(p.select_item()?);
    }
    p.expect_kw("FROM")?;
    let mut tables = vec![(p.ident()?, p.pos())];
    let mut joins = Vec::new();
    loop {
        if p.eat_sym(",") {
            let pos = p.pos();
            tables.push((p.ident()?, pos));
        } else if p.is_kw("JOIN") || p.is_kw("INNER") {
            p.eat_kw("INNER");
            p.expect_kw("JOIN")?;
            let pos = p.pos();
            tables.push((p.ident()?, pos));
            p.expect_kw("ON")?;
            loop {
                p.check_unsupported()?;
                let a = p.column()?;
                p.expect_sym("=")?;
                let b = p.column()?;
                joins.push((a, b));
                p.check_unsupported()?;
                if !p.eat_kw("AND") {
                    break;
                }
            }
        } else if p.is_kw("LEFT") || p.is_kw("RIGHT") || p.is_kw("OUTER") || p.is_kw("FULL") {
            return Err(Error::Unsupported(format!(
                "outer join at position {}",
                p.pos()
            )));
        } else {
            break;
        }
    }
    let mut preds = Vec::new();
    if p.eat_kw("WHERE") {
        preds.push(p.predicate()?);
        loop {
            p.check_unsupported()?;
            if !p.eat_kw("AND") {
                break;
            }
            preds.push(p.predicate()?);
        }
    }
    let mut group_by = Vec::new();
    if p.eat_kw("GROUP") {
        p.expect_kw("BY")?;
        group_by.push(p.column()?);
        while p.eat_sym(",") {
            group_by.push(p.column()?);
        }
    }
    for kw in ["ORDER", "HAVING"] {
        if p.is_kw(kw) {
            return Err(Error::Unsupported(kw.to_string()));
        }
    }
    let mut limit = None;
    if p.eat_kw("LIMIT") {
        match p.peek() {
            Some(Tok::Int(n)) if *n > 0 => {
                limit = Some(*n as usize);
                p.i += 1;
            }
            _ => return Err(syntax(p.pos(), "LIMIT needs a positive integer")),
        }
    }
    p.eat_sym(";");
    if p.i != toks.len() {
        p.check_unsupported()?;
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    Ok(RawQuery {
        items,
        tables,
        joins,
        preds,
        group_by,
        limit,
    })
}

struct Binder<'a> {
    db: &'a Database,
    tables: Vec<String>,
}

impl Binder<'_> {
    fn resolve(&self, c: &RawCol) -> Result<(ColumnRef, ColumnType)> {
        let lookup = |t: &str| -> Option<ColumnType> {
            let table = self.db.table_by_name(t)?;
            table.column_index(&c.column).map(|j| table.columns()[j].ty)
        };
        match &c.table {
            Some(t) => {
                if !self.tables.contains(t) {
                    return Err(Error::Semantic(format!(
                        "table {t} is not in the FROM clause (position {})",
                        c.pos
                    )));
                }
                let ty = lookup(t)
                    .ok_or_else(|| Error::Semantic(format!("unknown column {t}.{}", c.column)))?;
                Ok((ColumnRef::new(t.clone(), c.column.clone()), ty))
            }
            None => {
                let hits: Vec<(&String, ColumnType)> = self
                    .tables
                    .iter()
                    .filter_map(|t| lookup(t).map(|ty| (t, ty)))
                    .collect();
                match hits.as_slice() {
                    [(t, ty)] => Ok((ColumnRef::new((*t).clone(), c.column.clone()), *ty)),
                    [] => Err(Error::Semantic(format!("unknown column {}", c.column))),
                    _ => Err(Error::Semantic(format!("ambiguous column {}", c.column))),
                }
            }
        }
    }
}

fn check_literal(col: &ColumnRef, ty: ColumnType, v: &Value) -> Result<()> {
    let ok = match v {
        Value::Text(_) => ty == ColumnType::Text,
        Value::Int(_) | Value::Real(_) => ty.is_numeric(),
        Value::Null => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Semantic(format!(
            "literal {v} does not match type {} of {col}",
            ty.name()
        )))
    }
}

fn check_connected(tables: &[String], joins: &[JoinCondition]) -> Result<()> {
    let n = tables.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for j in joins {
        let a = tables.iter().position(|t| *t == j.left.table).unwrap();
        let b = tables.iter().position(|t| *t == j.right.table).unwrap();
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    if (1..n).all(|i| find(&mut parent, i) == root) {
        Ok(())
    } else {
        Err(Error::Semantic(
            "join conditions do not connect all tables (cross products are unsupported)".into(),
        ))
    }
}

/// Parses and binds one query against the catalog of `db`.
pub fn parse_sql(text: &str, db: &Database) -> Result<Query> {
    let raw = parse_raw(text)?;
    let mut tables = Vec::new();
    for (t, pos) in &raw.tables {
        if db.table_by_name(t).is_none() {
            return Err(Error::Semantic(format!(
                "unknown table {t} (position {pos})"
            )));
        }
        if tables.contains(t) {
            return Err(Error::Unsupported(format!(
                "table {t} listed twice (self-joins)"
            )));
        }
        tables.push(t.clone());
    }
    let binder = Binder { db, tables };

    let mut joins = Vec::new();
    let mut add_join = |a: &RawCol, b: &RawCol| -> Result<()> {
        let (l, lt) = binder.resolve(a)?;
        let (r, rt) = binder.resolve(b)?;
        if l.table == r.table {
            return Err(Error::Unsupported(format!(
                "same-table column comparison {l} = {r}"
            )));
        }
        if lt.is_numeric() != rt.is_numeric() {
            return Err(Error::Semantic(format!(
                "join {l} = {r} compares incompatible types"
            )));
        }
        joins.push(JoinCondition { left: l, right: r });
        Ok(())
    };
    for (a, b) in &raw.joins {
        add_join(a, b)?;
    }
    let mut predicates = Vec::new();
    for p in &raw.preds {
        if let RawOp::ColEq(other) = &p.op {
            add_join(&p.col, other)?;
            continue;
        }
        let (col, ty) = binder.resolve(&p.col)?;
        let op = match &p.op {
            RawOp::Cmp(c, v) => {
                check_literal(&col, ty, v)?;
                PredicateOp::Cmp(*c, v.clone())
            }
            RawOp::In(vs) => {
                for v in vs {
                    check_literal(&col, ty, v)?;
                }
                PredicateOp::In(vs.clone())
            }
            RawOp::Between(lo, hi) => {
                check_literal(&col, ty, lo)?;
                check_literal(&col, ty, hi)?;
                if lo.compare(hi) == Some(std::cmp::Ordering::Greater) {
                    return Err(Error::Semantic(format!("BETWEEN bounds reversed on {col}")));
                }
                PredicateOp::Between(lo.clone(), hi.clone())
            }
            RawOp::Like(pat) => {
                if ty != ColumnType::Text {
                    return Err(Error::Semantic(format!("LIKE on non-text column {col}")));
                }
                let prefix = pat
                    .strip_suffix('%')
                    .filter(|s| !s.contains(['%', '_']))
                    .ok_or_else(|| {
                        Error::Unsupported(format!("LIKE pattern {pat:?} (only 'prefix%')"))
                    })?;
                PredicateOp::LikePrefix(prefix.to_string())
            }
            RawOp::ColEq(_) => unreachable!(),
        };
        predicates.push(Predicate { column: col, op });
    }
    check_connected(&binder.tables, &joins)?;

    let aggs: Vec<&RawItem> = raw
        .items
        .iter()
        .filter(|i| matches!(i, RawItem::Agg(..)))
        .collect();
    let group_by = raw
        .group_by
        .iter()
        .map(|c| binder.resolve(c).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;

    if aggs.is_empty() {
        if !group_by.is_empty() {
            return Err(Error::Semantic("GROUP BY without an aggregate".into()));
        }
        let projection = if raw.items.iter().any(|i| matches!(i, RawItem::Star)) {
            if raw.items.len() > 1 {
                return Err(Error::Unsupported(
                    "mixing * with other select items".into(),
                ));
            }
            Projection::Star
        } else {
            let mut cols = Vec::new();
            for item in &raw.items {
                if let RawItem::Col(c) = item {
                    cols.push(binder.resolve(c)?.0);
                }
            }
            Projection::Columns(cols)
        };
        return Ok(Query::Spj(SpjQuery {
            tables: binder.tables,
            joins,
            predicates,
            projection,
            limit: raw.limit,
        }));
    }

    if aggs.len() > 1 {
        return Err(Error::Unsupported(
            "more than one aggregate in SELECT".into(),
        ));
    }
    let RawItem::Agg(func, col, pos) = aggs[0] else {
        unreachable!()
    };
    let column = match col {
        None => None,
        Some(c) => {
            let (cr, ty) = binder.resolve(c)?;
            if *func != AggFunc::Count && !ty.is_numeric() {
                return Err(Error::Semantic(format!(
                    "{}({cr}) needs a numeric column (position {pos})",
                    func.name()
                )));
            }
            Some(cr)
        }
    };
    let mut plain = Vec::new();
    for item in &raw.items {
        match item {
            RawItem::Star => return Err(Error::Unsupported("* next to an aggregate".into())),
            RawItem::Col(c) => {
                let cr = binder.resolve(c)?.0;
                if !group_by.contains(&cr) {
                    return Err(Error::Semantic(format!("{cr} must appear in GROUP BY")));
                }
                plain.push(cr);
            }
            RawItem::Agg(..) => {}
        }
    }
    let projection = if plain.is_empty() {
        Projection::Star
    } else {
        Projection::Columns(plain)
    };
    Ok(Query::Aggregate(AggregateQuery {
        inner: SpjQuery {
            tables: binder.tables,
            joins,
            predicates,
            projection,
            limit: raw.limit,
        },
        func: *func,
        column,
        group_by,
    }))
}

/// One query of a workload file together with its optional weight annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadEntry {
    pub line: usize,
    pub query: Query,
    pub weight: Option<f64>,
}

/// Parses workload text: one query per line, `--` comments ignored, and an
/// optional `-- w=<weight>` annotation on the line preceding a query.
pub fn parse_workload_text(text: &str, db: &Database) -> Result<Vec<WorkloadEntry>> {
    let mut out = Vec::new();
    let mut pending: Option<f64> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix("--") {
            if let Some(w) = comment.trim().strip_prefix("w=") {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad weight annotation", i + 1)))?;
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Format(format!(
                        "line {}: weight {w} outside [0,1]",
                        i + 1
                    )));
                }
                pending = Some(w);
            }
            continue;
        }
        let query = parse_sql(line, db).map_err(|e| match e {
            Error::Syntax { pos, msg } => Error::Syntax {
                pos,
                msg: format!("line {}: {msg}", i + 1),
            },
            other => other,
        })?;
        out.push(WorkloadEntry {
            line: i + 1,
            query,
            weight: pending.take(),
        });
    }
    Ok(out)
}
