//! Maps a key path inside a spec document back to a source line.

use std::fmt;

/// One step of a key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathSeg {
    Key(String),
    Index(usize),
}

impl From<&str> for PathSeg {
    fn from(k: &str) -> Self {
        PathSeg::Key(k.to_string())
    }
}

impl From<usize> for PathSeg {
    fn from(i: usize) -> Self {
        PathSeg::Index(i)
    }
}

/// Dotted rendering, e.g. `ber.detectors[2].trajectories`.
pub struct DisplayPath<'a>(pub &'a [PathSeg]);

impl fmt::Display for DisplayPath<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            match seg {
                PathSeg::Key(k) if i == 0 => write!(f, "{k}")?,
                PathSeg::Key(k) => write!(f, ".{k}")?,
                PathSeg::Index(n) => write!(f, "[{n}]")?,
            }
        }
        Ok(())
    }
}

/// 1-based line containing byte `offset` (clamped to the text).
pub fn line_of(text: &str, offset: usize) -> usize {
    let end = offset.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Line of the entry at `path` in a TOML document. Keys resolve to the line
/// of the key itself, array elements to the line where the element starts.
pub fn locate_toml(text: &str, path: &[PathSeg]) -> Option<usize> {
    use toml::de::{DeTable, DeValue};

    let doc = DeTable::parse(text).ok()?;
    let mut table: &DeTable = doc.get_ref();
    let mut value: Option<&DeValue> = None;
    let mut offset = None;
    for seg in path {
        match seg {
            PathSeg::Key(k) => {
                let t = match value {
                    None => table,
                    Some(DeValue::Table(t)) => t,
                    Some(_) => return None,
                };
                let (key, v) = t.iter().find(|(key, _)| key.get_ref() == k)?;
                offset = Some(key.span().start);
                table = t;
                value = Some(v.get_ref());
            }
            PathSeg::Index(i) => {
                let Some(DeValue::Array(a)) = value else {
                    return None;
                };
                let v = a.get(*i)?;
                offset = Some(v.span().start);
                value = Some(v.get_ref());
            }
        }
    }
    offset.map(|o| line_of(text, o))
}

/// Line of the value at `path` in a JSON document.
pub fn locate_json(text: &str, path: &[PathSeg]) -> Option<usize> {
    let mut s = JsonScan {
        b: text.as_bytes(),
        pos: 0,
    };
    s.skip_ws();
    let offset = s.find(path, 0)?;
    Some(line_of(text, offset))
}

const MAX_DEPTH: usize = 128;

/// Minimal JSON walker. It never allocates per value and gives up (returns
/// `None`) on anything malformed.
struct JsonScan<'a> {
    b: &'a [u8],
    pos: usize,
}

impl JsonScan<'_> {
    fn peek(&self) -> Option<u8> {
        self.b.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> Option<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Some(())
        } else {
            None
        }
    }

    /// Offset of the value at `path`, starting at the value under the cursor.
    fn find(&mut self, path: &[PathSeg], depth: usize) -> Option<usize> {
        self.skip_ws();
        let Some(first) = path.first() else {
            return Some(self.pos);
        };
        if depth > MAX_DEPTH {
            return None;
        }
        match (first, self.peek()?) {
            (PathSeg::Key(want), b'{') => {
                self.pos += 1;
                self.skip_ws();
                if self.peek() == Some(b'}') {
                    return None;
                }
                loop {
                    self.skip_ws();
                    let key_start = self.pos;
                    let (a, b) = self.string()?;
                    self.eat(b':')?;
                    if &self.b[a..b] == want.as_bytes() {
                        if path.len() == 1 {
                            return Some(key_start);
                        }
                        return self.find(&path[1..], depth + 1);
                    }
                    self.skip_value(depth + 1)?;
                    self.skip_ws();
                    match self.peek()? {
                        b',' => self.pos += 1,
                        _ => return None,
                    }
                }
            }
            (PathSeg::Index(want), b'[') => {
                self.pos += 1;
                let mut i = 0;
                loop {
                    self.skip_ws();
                    if self.peek()? == b']' {
                        return None;
                    }
                    if i == *want {
                        return self.find(&path[1..], depth + 1);
                    }
                    self.skip_value(depth + 1)?;
                    self.skip_ws();
                    match self.peek()? {
                        b',' => self.pos += 1,
                        _ => return None,
                    }
                    i += 1;
                }
            }
            _ => None,
        }
    }

    /// Byte range of a string literal's contents, escapes left in place.
    fn string(&mut self) -> Option<(usize, usize)> {
        if self.peek()? != b'"' {
            return None;
        }
        self.pos += 1;
        let start = self.pos;
        loop {
            match self.peek()? {
                b'"' => {
                    let end = self.pos;
                    self.pos += 1;
                    return Some((start, end));
                }
                b'\\' => self.pos += 2,
                _ => self.pos += 1,
            }
        }
    }

    fn skip_value(&mut self, depth: usize) -> Option<()> {
        if depth > MAX_DEPTH {
            return None;
        }
        self.skip_ws();
        match self.peek()? {
            b'"' => self.string().map(|_| ()),
            b'{' => {
                self.pos += 1;
                self.skip_ws();
                if self.peek()? == b'}' {
                    self.pos += 1;
                    return Some(());
                }
                loop {
                    self.skip_ws();
                    self.string()?;
                    self.eat(b':')?;
                    self.skip_value(depth + 1)?;
                    self.skip_ws();
                    match self.peek()? {
                        b',' => self.pos += 1,
                        b'}' => {
                            self.pos += 1;
                            return Some(());
                        }
                        _ => return None,
                    }
                }
            }
            b'[' => {
                self.pos += 1;
                self.skip_ws();
                if self.peek()? == b']' {
                    self.pos += 1;
                    return Some(());
                }
                loop {
                    self.skip_value(depth + 1)?;
                    self.skip_ws();
                    match self.peek()? {
                        b',' => self.pos += 1,
                        b']' => {
                            self.pos += 1;
                            return Some(());
                        }
                        _ => return None,
                    }
                }
            }
            _ => {
                let start = self.pos;
                while matches!(
                    self.peek(),
                    Some(b'0'..=b'9' | b'a'..=b'z' | b'A'..=b'Z' | b'-' | b'+' | b'.')
                ) {
                    self.pos += 1;
                }
                (self.pos > start).then_some(())
            }
        }
    }
}
