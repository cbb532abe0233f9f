//! Immutable in-memory relations with stable tuple identities.
//!
//! Every loaded row gets a dense id `0..n` that never changes. Tables built
//! by [`materialize`] keep the ids of the rows they were copied from, so a
//! query over an approximation set reports provenance in terms of the
//! original database.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ColumnType {
    Integer,
    Real,
    Text,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        !matches!(self, ColumnType::Text)
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Integer => "integer",
            ColumnType::Real => "real",
            ColumnType::Text => "text",
        }
    }

    pub fn parse(s: &str) -> Option<ColumnType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "integer" | "int" => Some(ColumnType::Integer),
            "real" | "float" | "double" => Some(ColumnType::Real),
            "text" | "string" => Some(ColumnType::Text),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
    pub nullable: bool,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
            nullable: false,
        }
    }

    pub fn nullable(mut self) -> Self {
        self.nullable = true;
        self
    }
}

/// A single cell. Equality and hashing are structural (`Int(1) != Real(1.0)`);
/// use [`Value::compare`] for SQL-style numeric comparison.
#[derive(Clone, Debug)]
pub enum Value {
    Null,
    Int(i64),
    Real(f64),
    Text(Arc<str>),
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Text(Arc::from(s))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// SQL comparison. Nulls and text/number mixes are incomparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.as_ref().cmp(b.as_ref())),
            (a, b) => {
                let (x, y) = (a.as_f64()?, b.as_f64()?);
                x.partial_cmp(&y)
            }
        }
    }

    /// Total order used for deterministic sorting (nulls first).
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Int(_) | Value::Real(_) => 1,
                Value::Text(_) => 2,
            }
        }
        match rank(self).cmp(&rank(other)) {
            Ordering::Equal => match (self, other) {
                (Value::Int(a), Value::Int(b)) => a.cmp(b),
                (Value::Text(a), Value::Text(b)) => a.cmp(b),
                (Value::Null, Value::Null) => Ordering::Equal,
                (a, b) => {
                    let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
                    x.total_cmp(&y)
                }
            },
            o => o,
        }
    }

    fn conforms(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Value::Null, _)
                | (Value::Int(_), ColumnType::Integer)
                | (Value::Int(_), ColumnType::Real)
                | (Value::Real(_), ColumnType::Real)
                | (Value::Text(_), ColumnType::Text)
        )
    }
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else if v.is_nan() {
        f64::NAN.to_bits()
    } else {
        v.to_bits()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => canonical_bits(*a) == canonical_bits(*b),
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Int(v) => {
                1u8.hash(state);
                v.hash(state);
            }
            Value::Real(v) => {
                2u8.hash(state);
                canonical_bits(*v).hash(state);
            }
            Value::Text(s) => {
                3u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => {
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TableId(pub usize);

/// A base tuple: table plus its original row id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleRef {
    pub table: TableId,
    pub row: usize,
}

impl TupleRef {
    pub fn new(table: TableId, row: usize) -> Self {
        TupleRef { table, row }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
    /// Original row id of each stored row; `ids[i] == i` for loaded tables.
    ids: Vec<usize>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        rows: Vec<Vec<Value>>,
    ) -> Result<Table> {
        let name = name.into();
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Semantic(format!(
                    "duplicate column {}.{}",
                    name, c.name
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Semantic(format!(
                    "row {i} of {name} has {} values, schema has {}",
                    row.len(),
                    columns.len()
                )));
            }
            for (v, c) in row.iter().zip(&columns) {
                if !v.conforms(c.ty) || (v.is_null() && !c.nullable) {
                    return Err(Error::Semantic(format!(
                        "row {i} of {name}: value {v} does not fit column {} ({})",
                        c.name,
                        c.ty.name()
                    )));
                }
            }
        }
        let ids = (0..rows.len()).collect();
        Ok(Table {
            name,
            columns,
            rows,
            ids,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row(&self, pos: usize) -> &[Value] {
        &self.rows[pos]
    }

    /// Original row id of the row stored at `pos`.
    pub fn id_at(&self, pos: usize) -> usize {
        self.ids[pos]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Storage position of original row `id`, if this table holds it.
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Values of original row `id`.
    pub fn row_by_id(&self, id: usize) -> Option<&[Value]> {
        self.position_of(id).map(|p| self.rows[p].as_slice())
    }

    fn subset(&self, keep: &BTreeSet<usize>) -> Table {
        let mut rows = Vec::with_capacity(keep.len());
        let mut ids = Vec::with_capacity(keep.len());
        for &id in keep {
            if let Some(p) = self.position_of(id) {
                rows.push(self.rows[p].clone());
                ids.push(id);
            }
        }
        Table {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows,
            ids,
        }
    }

    /// Repeats every row `factor` times with fresh ids (latency benchmarks).
    pub fn replicated(&self, factor: usize) -> Table {
        let mut rows = Vec::with_capacity(self.rows.len() * factor);
        for _ in 0..factor.max(1) {
            rows.extend(self.rows.iter().cloned());
        }
        let ids = (0..rows.len()).collect();
        Table {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows,
            ids,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Database {
    tables: Vec<Arc<Table>>,
    by_name: HashMap<String, TableId>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tables(tables: impl IntoIterator<Item = Table>) -> Result<Database> {
        let mut db = Database::new();
        for t in tables {
            db.add_table(t)?;
        }
        Ok(db)
    }

    pub fn add_table(&mut self, table: Table) -> Result<TableId> {
        if self.by_name.contains_key(table.name()) {
            return Err(Error::Semantic(format!("duplicate table {}", table.name())));
        }
        let id = TableId(self.tables.len());
        self.by_name.insert(table.name().to_string(), id);
        self.tables.push(Arc::new(table));
        Ok(id)
    }

    pub fn table_id(&self, name: &str) -> Option<TableId> {
        self.by_name.get(name).copied()
    }

    pub fn table(&self, id: TableId) -> &Table {
        &self.tables[id.0]
    }

    pub fn table_by_name(&self, name: &str) -> Option<&Table> {
        self.table_id(name).map(|id| self.table(id))
    }

    pub fn tables(&self) -> impl Iterator<Item = (TableId, &Table)> {
        self.tables
            .iter()
            .enumerate()
            .map(|(i, t)| (TableId(i), t.as_ref()))
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn cardinalities(&self) -> BTreeMap<String, usize> {
        self.tables
            .iter()
            .map(|t| (t.name().to_string(), t.len()))
            .collect()
    }

    pub fn total_rows(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    /// Values of a tuple, looked up by original row id.
    pub fn resolve(&self, r: TupleRef) -> Option<&[Value]> {
        self.tables.get(r.table.0)?.row_by_id(r.row)
    }

    /// Loads every `*.csv` in `dir`, using a `<name>.schema` sidecar when present.
    pub fn load_dir(dir: &Path) -> Result<Database> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let mut db = Database::new();
        for p in paths {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let sidecar = p.with_extension("schema");
            let schema = if sidecar.exists() {
                Some(read_schema_file(&sidecar)?)
            } else {
                None
            };
            db.add_table(load_csv(&p, &name, schema.as_deref())?)?;
        }
        Ok(db)
    }

    /// Writes `<name>.csv` and `<name>.schema` per table; the inverse of
    /// [`Database::load_dir`].
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name()));
            let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
            let mut w = csv::Writer::from_path(&path).map_err(io)?;
            w.write_record(t.columns().iter().map(|c| c.name.as_str()))
                .map_err(io)?;
            for row in t.rows() {
                w.write_record(row.iter().map(|v| {
                    if v.is_null() {
                        String::new()
                    } else {
                        v.to_string()
                    }
                }))
                .map_err(io)?;
            }
            w.flush()?;
            write_schema_file(&path.with_extension("schema"), t.columns())?;
        }
        Ok(())
    }

    pub fn replicated(&self, factor: usize) -> Database {
        let mut db = Database::new();
        for t in &self.tables {
            db.add_table(t.replicated(factor))
                .expect("names already unique");
        }
        db
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    AlreadyPresent,
    BudgetExhausted,
}

/// Per-table tuple subsets with a total budget of `k` distinct tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApproximationSet {
    members: BTreeMap<TableId, BTreeSet<usize>>,
    budget: usize,
    row_limits: Vec<usize>,
    len: usize,
}

impl ApproximationSet {
    pub fn new(db: &Database, budget: usize) -> Self {
        ApproximationSet {
            members: BTreeMap::new(),
            budget,
            row_limits: db.tables().map(|(_, t)| t.len()).collect(),
            len: 0,
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.len
    }

    fn check(&self, r: TupleRef) -> Result<()> {
        match self.row_limits.get(r.table.0) {
            Some(&n) if r.row < n => Ok(()),
            Some(_) => Err(Error::Reference(format!(
                "row {} out of range for table {}",
                r.row, r.table.0
            ))),
            None => Err(Error::Reference(format!("no table with id {}", r.table.0))),
        }
    }

    pub fn insert(&mut self, r: TupleRef) -> Result<InsertOutcome> {
        self.check(r)?;
        if self.contains(r) {
            return Ok(InsertOutcome::AlreadyPresent);
        }
        if self.len >= self.budget {
            return Ok(InsertOutcome::BudgetExhausted);
        }
        self.members.entry(r.table).or_default().insert(r.row);
        self.len += 1;
        Ok(InsertOutcome::Inserted)
    }

    pub fn remove(&mut self, r: TupleRef) -> bool {
        let removed = self
            .members
            .get_mut(&r.table)
            .is_some_and(|s| s.remove(&r.row));
        if removed {
            self.len -= 1;
        }
        removed
    }

    pub fn contains(&self, r: TupleRef) -> bool {
        self.members
            .get(&r.table)
            .is_some_and(|s| s.contains(&r.row))
    }

    pub fn rows_of(&self, table: TableId) -> Option<&BTreeSet<usize>> {
        self.members.get(&table)
    }

    pub fn size_of(&self, table: TableId) -> usize {
        self.members.get(&table).map_or(0, |s| s.len())
    }

    pub fn tuples(&self) -> impl Iterator<Item = TupleRef> + '_ {
        self.members
            .iter()
            .flat_map(|(&t, rows)| rows.iter().map(move |&r| TupleRef::new(t, r)))
    }
}

/// Database whose table `t` holds exactly the rows in `set` for `t`.
pub fn materialize(set: &ApproximationSet, db: &Database) -> Database {
    let empty = BTreeSet::new();
    let mut out = Database::new();
    for (id, table) in db.tables() {
        let keep = set.rows_of(id).unwrap_or(&empty);
        out.add_table(table.subset(keep))
            .expect("names already unique");
    }
    out
}

/// Reads a `name:type:nullable` schema file, one column per line.
pub fn read_schema_file(path: &Path) -> Result<Vec<Column>> {
    let text = std::fs::read_to_string(path)?;
    let mut cols = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(':').collect();
        let bad = |msg: &str| Error::Ingestion {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            msg: msg.to_string(),
        };
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad("expected name:type[:nullable]"));
        }
        let ty = ColumnType::parse(parts[1]).ok_or_else(|| bad("unknown column type"))?;
        let nullable = match parts.get(2).map(|s| s.trim().to_ascii_lowercase()) {
            None => false,
            Some(s) if s == "true" || s == "nullable" || s == "1" || s == "yes" => true,
            Some(s) if s == "false" || s == "0" || s == "no" || s.is_empty() => false,
            Some(_) => return Err(bad("nullable flag must be true or false")),
        };
        cols.push(Column {
            name: parts[0].trim().to_string(),
            ty,
            nullable,
        });
    }
    Ok(cols)
}

pub fn write_schema_file(path: &Path, columns: &[Column]) -> Result<()> {
    let mut s = String::new();
    for c in columns {
        s.push_str(&format!("{}:{}:{}\n", c.name, c.ty.name(), c.nullable));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn parse_cell(raw: &str, ty: ColumnType) -> Option<Value> {
    match ty {
        ColumnType::Integer => raw.trim().parse::<i64>().ok().map(Value::Int),
        ColumnType::Real => raw.trim().parse::<f64>().ok().map(Value::Real),
        ColumnType::Text => Some(Value::text(raw)),
    }
}

fn infer_kind(raw: &str) -> ColumnType {
    let t = raw.trim();
    if t.parse::<i64>().is_ok() {
        ColumnType::Integer
    } else if t.parse::<f64>().is_ok() {
        ColumnType::Real
    } else {
        ColumnType::Text
    }
}

/// Loads a CSV file with a header row. Without a schema, column types are
/// inferred with integer → real → text promotion and empty cells become
/// nulls (marking the column nullable).
pub fn load_csv(path: &Path, name: &str, schema: Option<&[Column]>) -> Result<Table> {
    let err = |line: u64, msg: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if let Some(cols) = schema {
        if cols.len() != header.len() || cols.iter().zip(&header).any(|(c, h)| &c.name != h) {
            return Err(err(1, "header does not match declared schema".into()));
        }
    }

    let mut raw_rows: Vec<(u64, Vec<String>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        raw_rows.push((line, rec.iter().map(str::to_string).collect()));
    }

    let columns: Vec<Column> = match schema {
        Some(cols) => cols.to_vec(),
        None => header
            .iter()
            .enumerate()
            .map(|(j, h)| {
                let mut ty: Option<ColumnType> = None;
                let mut nullable = false;
                for (_, r) in &raw_rows {
                    if r[j].is_empty() {
                        nullable = true;
                        continue;
                    }
                    let k = infer_kind(&r[j]);
                    ty = Some(ty.map_or(k, |t| t.max(k)));
                }
                Column {
                    name: h.clone(),
                    ty: ty.unwrap_or(ColumnType::Text),
                    nullable,
                }
            })
            .collect(),
    };

    let mut rows = Vec::with_capacity(raw_rows.len());
    for (line, r) in raw_rows {
        let mut row = Vec::with_capacity(columns.len());
        for (cell, col) in r.iter().zip(&columns) {
            if cell.is_empty() && (col.nullable || col.ty != ColumnType::Text) {
                if !col.nullable {
                    return Err(err(
                        line,
                        format!("empty value in non-nullable column {}", col.name),
                    ));
                }
                row.push(Value::Null);
                continue;
            }
            let v = parse_cell(cell, col.ty).ok_or_else(|| {
                err(
                    line,
                    format!(
                        "value {cell:?} is not a valid {} for column {}",
                        col.ty.name(),
                        col.name
                    ),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Table::new(name, columns, rows).map_err(|e| err(0, e.to_string()))
}
