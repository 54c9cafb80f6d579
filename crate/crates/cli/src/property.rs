//! Text form of safety properties: `VAR (>|<) BOUND @ r=VALUE`.

use slarkit_core::abstraction::Sense;
use slarkit_core::markov::SafetyProperty;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropertyError {
    #[error("property syntax error at byte {position}: {reason}")]
    Syntax { position: usize, reason: String },
    #[error("threshold r={0} outside [0,1]")]
    Range(f64),
}

fn syntax(position: usize, reason: &str) -> PropertyError {
    PropertyError::Syntax {
        position,
        reason: reason.into(),
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn identifier(&mut self) -> Result<&'a str, PropertyError> {
        let bytes = self.text.as_bytes();
        let start = self.pos;
        if start >= bytes.len() || !(bytes[start].is_ascii_alphabetic() || bytes[start] == b'_') {
            return Err(syntax(start, "expected a variable name"));
        }
        let mut end = start + 1;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        self.pos = end;
        Ok(&self.text[start..end])
    }

    fn number(&mut self) -> Result<f64, PropertyError> {
        let bytes = self.text.as_bytes();
        let start = self.pos;
        let mut end = start;
        if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
            end += 1;
        }
        while end < bytes.len()
            && (bytes[end].is_ascii_digit()
                || bytes[end] == b'.'
                || bytes[end] == b'e'
                || bytes[end] == b'E'
                || ((bytes[end] == b'-' || bytes[end] == b'+')
                    && (bytes[end - 1] == b'e' || bytes[end - 1] == b'E')))
        {
            end += 1;
        }
        let value: f64 = self.text[start..end]
            .parse()
            .map_err(|_| syntax(start, "expected a number"))?;
        self.pos = end;
        Ok(value)
    }

    fn expect(&mut self, byte: u8, what: &str) -> Result<(), PropertyError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.pos, what))
        }
    }
}

/// Parses `VAR (>|<) BOUND @ r=VALUE`. Only the strict comparators are in
/// the property grammar; operating ranges are open intervals.
pub fn parse_property(text: &str) -> Result<SafetyProperty, PropertyError> {
    let mut cursor = Cursor { text, pos: 0 };
    cursor.skip_ws();
    let variable = cursor.identifier()?;
    cursor.skip_ws();
    let sense = match cursor.peek() {
        Some(b'>') => Sense::Gt,
        Some(b'<') => Sense::Lt,
        _ => return Err(syntax(cursor.pos, "expected `>` or `<`")),
    };
    cursor.pos += 1;
    if cursor.peek() == Some(b'=') {
        return Err(syntax(
            cursor.pos,
            "only strict comparators are allowed in properties",
        ));
    }
    cursor.skip_ws();
    let bound = cursor.number()?;
    cursor.skip_ws();
    cursor.expect(b'@', "expected `@`")?;
    cursor.skip_ws();
    if cursor.identifier()? != "r" {
        return Err(syntax(cursor.pos, "expected `r=`"));
    }
    cursor.skip_ws();
    cursor.expect(b'=', "expected `=`")?;
    cursor.skip_ws();
    let threshold = cursor.number()?;
    cursor.skip_ws();
    if cursor.pos != text.len() {
        return Err(syntax(cursor.pos, "trailing input"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PropertyError::Range(threshold));
    }
    SafetyProperty::new(variable.into(), sense, bound, threshold)
        .map_err(|e| syntax(0, &e.to_string()))
}

pub fn print_property(property: &SafetyProperty) -> String {
    format!(
        "{} {} {} @ r={}",
        property.variable(),
        property.sense().symbol(),
        property.bound(),
        property.threshold()
    )
}

/// Property files hold one property per line; blank lines and `#` comments
/// are skipped.
pub fn parse_property_file(text: &str) -> Result<Vec<SafetyProperty>, PropertyError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_property)
        .collect()
}
