//! Line-oriented snapshot format:
//!
//! ```text
//! CSTORE v1 page_capacity=4096
//! O <oid> <class_id> <size> <page_id> <slot> [ref1,ref2,...]
//! ```
//!
//! Object lines are emitted in (page_id, slot) order and every line, the
//! last included, ends with a newline.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{IoCounters, ObjectId, PageId, Placement, Store, StoredObject};
use crate::error::{Error, Result};

const MAGIC: &str = "CSTORE v1 page_capacity=";

impl Store {
    pub fn to_snapshot_string(&self) -> String {
        let mut out = format!("{MAGIC}{}\n", self.page_capacity);
        for page in self.pages.values() {
            for (slot, oid) in page.slots.iter().enumerate() {
                let obj = &self.objects[oid];
                let refs: Vec<String> = obj.refs.iter().map(|r| r.0.to_string()).collect();
                let _ = writeln!(
                    out,
                    "O {} {} {} {} {} [{}]",
                    oid.0,
                    obj.class_id,
                    obj.size,
                    page.id.0,
                    slot,
                    refs.join(",")
                );
            }
        }
        out
    }

    pub fn from_snapshot_str(text: &str) -> Result<Store> {
        if !text.is_empty() && !text.ends_with('\n') {
            let line = text.lines().count();
            return Err(Error::parse(line, "truncated line (missing newline)"));
        }
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
        let capacity: u32 = header
            .strip_prefix(MAGIC)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(1, format!("bad header '{header}'")))?;

        let mut rows = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                return Err(Error::parse(n, "blank line"));
            }
            rows.push(parse_object_line(line).map_err(|m| Error::parse(n, m))?);
        }
        let last = rows.len() + 1;
        Store::from_parts(capacity, rows).map_err(|m| Error::parse(last, m))
    }

    /// Writes the snapshot atomically (temp file + rename).
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_snapshot_string().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Store> {
        Store::from_snapshot_str(&fs::read_to_string(path)?)
    }
}

fn parse_object_line(line: &str) -> Result<(StoredObject, Placement), String> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 7 || fields[0] != "O" {
        return Err(format!("expected 7 fields starting with 'O', got '{line}'"));
    }
    let num = |i: usize, what: &str| -> Result<u64, String> {
        fields[i]
            .parse::<u64>()
            .map_err(|_| format!("bad {what} '{}'", fields[i]))
    };
    let oid = num(1, "oid")?;
    if oid == 0 {
        return Err("object ids start at 1".into());
    }
    let class_id = u32::try_from(num(2, "class id")?).map_err(|e| e.to_string())?;
    let size = u32::try_from(num(3, "size")?).map_err(|e| e.to_string())?;
    let page = num(4, "page id")?;
    let slot = num(5, "slot")? as usize;
    let refs = fields[6]
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("bad reference list '{}'", fields[6]))?;
    let refs = if refs.is_empty() {
        Vec::new()
    } else {
        refs.split(',')
            .map(|r| {
                r.parse::<u64>()
                    .map(ObjectId)
                    .map_err(|_| format!("bad reference '{r}'"))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok((
        StoredObject {
            oid: ObjectId(oid),
            class_id,
            size,
            refs,
        },
        Placement {
            page: PageId(page),
            slot,
        },
    ))
}

/// CSV with columns `window,page_reads,page_writes`.
pub fn io_report_csv<'a>(rows: impl IntoIterator<Item = (&'a str, IoCounters)>) -> String {
    let mut out = String::from("window,page_reads,page_writes\n");
    for (window, io) in rows {
        let _ = writeln!(out, "{window},{},{}", io.page_reads, io.page_writes);
    }
    out
}
