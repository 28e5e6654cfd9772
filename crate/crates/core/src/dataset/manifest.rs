use std::io::{BufRead, Write};

use super::ManifestRow;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "midi_path,context_start,window_start,out_of_context";

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Splits one CSV line, honouring double-quoted fields.
fn split_line(line: &str) -> Option<Vec<String>> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(ch) = chars.next() {
        match (quoted, ch) {
            (true, '"') if chars.peek() == Some(&'"') => {
                chars.next();
                cur.push('"');
            }
            (true, '"') => quoted = false,
            (false, '"') if cur.is_empty() => quoted = true,
            (false, ',') => fields.push(std::mem::take(&mut cur)),
            (_, c) => cur.push(c),
        }
    }
    if quoted {
        return None;
    }
    fields.push(cur);
    Some(fields)
}

/// UTF-8, LF line endings, header first.
pub fn write_manifest<W: Write>(rows: &[ManifestRow], mut out: W) -> Result<()> {
    writeln!(out, "{MANIFEST_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            quote(&r.midi_path),
            r.context_start,
            r.window_start,
            r.out_of_context
        )?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if idx == 0 {
            if line.trim_end() != MANIFEST_HEADER {
                return Err(err(format!("expected header {MANIFEST_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(&line).ok_or_else(|| err("unterminated quote".into()))?;
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| err(format!("bad frame index {s:?}")))
        };
        let flag = match fields[3].trim().to_ascii_lowercase().as_str() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(err(format!("bad flag {other:?}"))),
        };
        rows.push(ManifestRow {
            midi_path: fields[0].clone(),
            context_start: num(&fields[1])?,
            window_start: num(&fields[2])?,
            out_of_context: flag,
        });
    }
    Ok(rows)
}
