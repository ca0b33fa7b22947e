//! Deterministic CSV and JSON emission. Floats are printed with 17
//! significant digits so round trips are exact and reruns byte-identical;
//! CSV quoting follows RFC 4180 with CRLF row endings.

/// 17 significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug)]
pub enum Field {
    Str(String),
    F64(f64),
    U64(u64),
    I64(i64),
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Str(s.to_string())
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::F64(x)
    }
}

impl From<u64> for Field {
    fn from(x: u64) -> Self {
        Field::U64(x)
    }
}

fn quote_csv(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// In-memory CSV builder with a fixed header.
#[derive(Clone, Debug)]
pub struct CsvBuilder {
    columns: usize,
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.iter().map(|h| quote_csv(h)).collect::<Vec<_>>().join(","));
        buf.push_str("\r\n");
        CsvBuilder { columns: header.len(), buf }
    }

    pub fn row(&mut self, fields: &[Field]) {
        assert_eq!(fields.len(), self.columns, "row width mismatch");
        let cells: Vec<String> = fields
            .iter()
            .map(|f| match f {
                Field::Str(s) => quote_csv(s),
                Field::F64(x) => fmt_f64(*x),
                Field::U64(x) => x.to_string(),
                Field::I64(x) => x.to_string(),
            })
            .collect();
        self.buf.push_str(&cells.join(","));
        self.buf.push_str("\r\n");
    }

    pub fn finish(self) -> String {
        self.buf
    }
}
