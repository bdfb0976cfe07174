//! Target mask ingestion: PGM (P2 or P5) images and ASCII 0/1 grids.
//!
//! Rows are returned bottom-up (`rows[y][x]`, `y = 0` at the bottom of the
//! image) so that they index the build plane directly.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },

    #[error("byte {byte}: {reason}")]
    Byte { byte: usize, reason: String },

    #[error("{0}")]
    Io(String),
}

fn at_line(line: usize, reason: impl Into<String>) -> MaskError {
    MaskError::Line {
        line,
        reason: reason.into(),
    }
}

pub type MaskGrid = Vec<Vec<bool>>;

pub fn read_mask(path: &Path) -> Result<MaskGrid, MaskError> {
    let bytes = std::fs::read(path).map_err(|e| MaskError::Io(format!("{}: {e}", path.display())))?;
    parse_mask(&bytes)
}

pub fn parse_mask(bytes: &[u8]) -> Result<MaskGrid, MaskError> {
    let mut rows = match bytes.get(..2) {
        Some(b"P2") | Some(b"P5") => parse_pgm(bytes)?,
        Some([b'P', _]) => {
            return Err(at_line(1, "bad magic: expected P2 or P5"));
        }
        _ => parse_ascii(bytes)?,
    };
    rows.reverse();
    Ok(rows)
}

fn parse_ascii(bytes: &[u8]) -> Result<MaskGrid, MaskError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MaskError::Byte {
        byte: e.valid_up_to(),
        reason: "not UTF-8 text".into(),
    })?;
    let mut rows: MaskGrid = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(at_line(line_no, format!("unexpected character '{other}'"))),
            })
            .collect::<Result<Vec<bool>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(at_line(
                    line_no,
                    format!("row has {} cells, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(at_line(1, "empty mask"));
    }
    Ok(rows)
}

/// Header tokens with their line numbers; stops after `count` tokens and
/// returns the offset just past the single whitespace that ends the header.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<(String, usize)>, usize), MaskError> {
    let mut tokens = Vec::new();
    let mut line = 1;
    let mut i = 0;
    while tokens.len() < count {
        match bytes.get(i) {
            None => return Err(at_line(line, "truncated header")),
            Some(b'#') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            Some(b'\n') => {
                line += 1;
                i += 1;
            }
            Some(c) if c.is_ascii_whitespace() => i += 1,
            Some(_) => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                tokens.push((String::from_utf8_lossy(&bytes[start..i]).into_owned(), line));
            }
        }
    }
    Ok((tokens, i + 1))
}

fn parse_pgm(bytes: &[u8]) -> Result<MaskGrid, MaskError> {
    let (head, data_start) = header_tokens(bytes, 4)?;
    let number = |(tok, line): &(String, usize), what: &str| -> Result<usize, MaskError> {
        tok.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| at_line(*line, format!("bad {what} '{tok}'")))
    };
    let width = number(&head[1], "width")?;
    let height = number(&head[2], "height")?;
    let maxval = number(&head[3], "maxval")?;
    if maxval > 65535 {
        return Err(at_line(head[3].1, "maxval above 65535"));
    }
    let inside = |v: usize| v * 255 > 127 * maxval;
    let pixels: Vec<bool> = if head[0].0 == "P5" {
        let wide = maxval > 255;
        let bpp = if wide { 2 } else { 1 };
        let need = width * height * bpp;
        let data = bytes.get(data_start..).unwrap_or(&[]);
        if data.len() < need {
            return Err(MaskError::Byte {
                byte: bytes.len(),
                reason: format!("expected {need} bytes of pixel data, found {}", data.len()),
            });
        }
        (0..width * height)
            .map(|p| {
                let v = if wide {
                    usize::from(data[2 * p]) << 8 | usize::from(data[2 * p + 1])
                } else {
                    usize::from(data[p])
                };
                inside(v)
            })
            .collect()
    } else {
        let (all, _) = header_tokens(bytes, 4 + width * height).map_err(|e| match e {
            MaskError::Line { line, .. } => at_line(
                line,
                format!("expected {} pixel values", width * height),
            ),
            other => other,
        })?;
        all[4..]
            .iter()
            .map(|t| {
                let (tok, line) = t;
                let v: usize = tok
                    .parse()
                    .map_err(|_| at_line(*line, format!("bad pixel '{tok}'")))?;
                if v > maxval {
                    return Err(at_line(*line, format!("pixel {v} above maxval {maxval}")));
                }
                Ok(inside(v))
            })
            .collect::<Result<_, _>>()?
    };
    Ok(pixels.chunks(width).map(<[bool]>::to_vec).collect())
}

/// ASCII PGM (P2) rendering of a mask, top row first.
pub fn to_pgm(rows: &MaskGrid) -> String {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    let mut s = format!("P2\n{w} {h}\n255\n");
    for row in rows.iter().rev() {
        let line: Vec<&str> = row.iter().map(|&b| if b { "255" } else { "0" }).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}
