//! Lexer shared by network and scenario documents: `[section]` headers,
//! comma-separated records, `#` comments.

use super::GridError;

#[derive(Debug, Clone)]
pub(crate) struct Record {
    pub line: usize,
    pub fields: Vec<String>,
}

impl Record {
    pub fn field(&self, i: usize) -> Result<&str, GridError> {
        self.fields.get(i).map(String::as_str).ok_or_else(|| GridError::Syntax {
            line: self.line,
            msg: format!("expected at least {} fields, found {}", i + 1, self.fields.len()),
        })
    }

    pub fn number(&self, i: usize) -> Result<f64, GridError> {
        parse_decimal(self.field(i)?, self.line)
    }

    pub fn expect_len(&self, allowed: &[usize]) -> Result<(), GridError> {
        if allowed.contains(&self.fields.len()) {
            Ok(())
        } else {
            Err(GridError::Syntax {
                line: self.line,
                msg: format!("expected {:?} fields, found {}", allowed, self.fields.len()),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Section {
    pub name: String,
    pub records: Vec<Record>,
}

pub(crate) fn lex(text: &str, known: &[&str]) -> Result<Vec<Section>, GridError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| GridError::Syntax {
                line,
                msg: format!("malformed section header `{content}`"),
            })?;
            let name = name.trim().to_ascii_lowercase();
            if !known.contains(&name.as_str()) {
                return Err(GridError::Syntax { line, msg: format!("unknown section [{name}]") });
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(GridError::Syntax { line, msg: format!("section [{name}] repeated") });
            }
            sections.push(Section { name, records: Vec::new() });
            continue;
        }
        let section = sections.last_mut().ok_or_else(|| GridError::Syntax {
            line,
            msg: "record before any section header".into(),
        })?;
        let fields = content.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>();
        if fields.iter().any(String::is_empty) {
            return Err(GridError::Syntax { line, msg: "empty field".into() });
        }
        section.records.push(Record { line, fields });
    }
    Ok(sections)
}

/// Plain decimal: optional sign, digits, optional fraction. No exponents,
/// no `inf`/`nan`.
pub(crate) fn parse_decimal(s: &str, line: usize) -> Result<f64, GridError> {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let mut seen_digit = false;
    let mut seen_dot = false;
    for c in body.chars() {
        match c {
            '0'..='9' => seen_digit = true,
            '.' if !seen_dot => seen_dot = true,
            _ => {
                return Err(GridError::Syntax { line, msg: format!("`{s}` is not a decimal number") })
            }
        }
    }
    if !seen_digit {
        return Err(GridError::Syntax { line, msg: format!("`{s}` is not a decimal number") });
    }
    s.parse::<f64>()
        .map_err(|_| GridError::Syntax { line, msg: format!("`{s}` is not a decimal number") })
}
