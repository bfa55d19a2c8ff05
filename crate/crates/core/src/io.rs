//! Ratings CSV: header `user_id,item_id,rating`, one triple per line, an
//! optional fourth column (e.g. a timestamp) is ignored.

use std::io::{BufRead, Write};

use crate::data::{RatingMatrix, Triple};
use crate::error::{Error, Result};

pub const RATINGS_HEADER: &str = "user_id,item_id,rating";

/// Parses a ratings file. Errors carry 1-based line numbers (header is line 1).
pub fn read_ratings<R: BufRead>(reader: R) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    if header.trim_end_matches('\r') != RATINGS_HEADER
        && !header.trim_end_matches('\r').starts_with(&format!("{RATINGS_HEADER},"))
    {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{RATINGS_HEADER}`"),
        });
    }

    for (idx, line) in lines.enumerate() {
        let line_no = idx as u64 + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        triples.push(parse_line(line).map_err(|message| Error::Parse { line: line_no, message })?);
    }
    Ok(triples)
}

fn parse_line(line: &str) -> std::result::Result<Triple, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() < 3 || fields.len() > 4 {
        return Err(format!("expected 3 or 4 fields, found {}", fields.len()));
    }
    let (user, item) = (fields[0].trim(), fields[1].trim());
    if user.is_empty() {
        return Err("empty user_id".into());
    }
    if item.is_empty() {
        return Err("empty item_id".into());
    }
    let rating = fields[2]
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|r| r.is_finite())
        .ok_or_else(|| "invalid rating".to_string())?;
    Ok(Triple::new(user, item, rating))
}

/// Writes the matrix back in the same format, user-major and in handle order.
pub fn write_ratings<W: Write>(m: &RatingMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{RATINGS_HEADER}")?;
    for (u, i, r) in m.triples() {
        writeln!(out, "{},{},{}", m.user_label(u), m.item_label(i), r)?;
    }
    Ok(())
}
