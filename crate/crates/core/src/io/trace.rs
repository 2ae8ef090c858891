//! Line-oriented trace files.
//!
//! ```text
//! # comment
//! H,version,1
//! H,site,<name>,<config hash>
//! H,period,0.5
//! H,nodes,0,1,2,3
//! H,channels,11,26
//! V,<start>,<end>            empty-room segment [start, end)
//! R,<t>,<tx>,<rx>,<ch>,<dBm|NA>
//! G,<t>,<x>,<y>  or  G,<t>,OUT
//! ```
//!
//! Links absent from a timestamp read as missing samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DflError, Result};
use crate::geometry::{Channel, LinkId, NodeId, Point};
use crate::rss_model::{RssFrame, RssValue};
use crate::site::Site;

use super::{atomic_write, parse_f64};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub site_name: String,
    pub site_hash: String,
    pub period_s: f64,
    pub nodes: Vec<NodeId>,
    pub channels: Vec<Channel>,
    /// Empty-room segments `[start, end)` in seconds.
    pub empty_segments: Vec<(f64, f64)>,
    /// Samples ordered by `links()`.
    pub frames: Vec<RssFrame>,
    /// Ground truth aligned with `frames`, when recorded.
    pub truth: Option<Vec<Option<Point>>>,
}

impl TraceFile {
    /// Every directed node pair on every channel, sorted by (tx, rx, channel).
    pub fn links(&self) -> Vec<LinkId> {
        let mut nodes = self.nodes.clone();
        nodes.sort_unstable();
        let mut channels = self.channels.clone();
        channels.sort_unstable();
        let mut out = Vec::new();
        for &tx in &nodes {
            for &rx in &nodes {
                if tx != rx {
                    out.extend(channels.iter().map(|&channel| LinkId { tx, rx, channel }));
                }
            }
        }
        out
    }

    /// Check that the trace was recorded against `site`'s layout.
    pub fn check_site(&self, site: &Site) -> Result<()> {
        let site_links: Vec<LinkId> = site.links().iter().map(|l| l.id).collect();
        if self.links() != site_links {
            return Err(DflError::Input(format!(
                "trace links ({} nodes, channels {:?}) do not match the site layout",
                self.nodes.len(),
                self.channels
            )));
        }
        Ok(())
    }

    /// Frames inside any empty-room segment.
    pub fn empty_room_frames(&self) -> impl Iterator<Item = &RssFrame> {
        self.frames
            .iter()
            .filter(|f| self.empty_segments.iter().any(|(a, b)| f.timestamp >= *a && f.timestamp < *b))
    }

    pub fn to_text(&self) -> String {
        let links = self.links();
        let mut s = String::new();
        s.push_str("# dfl trace\n");
        let _ = writeln!(s, "H,version,{TRACE_VERSION}");
        let _ = writeln!(s, "H,site,{},{}", self.site_name, self.site_hash);
        let _ = writeln!(s, "H,period,{}", self.period_s);
        let _ = writeln!(s, "H,nodes,{}", join(&self.nodes));
        let _ = writeln!(s, "H,channels,{}", join(&self.channels));
        for (a, b) in &self.empty_segments {
            let _ = writeln!(s, "V,{a},{b}");
        }
        for (i, f) in self.frames.iter().enumerate() {
            if let Some(truth) = &self.truth {
                match truth[i] {
                    Some(p) => {
                        let _ = writeln!(s, "G,{},{},{}", f.timestamp, p.x, p.y);
                    }
                    None => {
                        let _ = writeln!(s, "G,{},OUT", f.timestamp);
                    }
                }
            }
            for (id, r) in links.iter().zip(&f.values) {
                let _ = write!(s, "R,{},{},{},{},", f.timestamp, id.tx, id.rx, id.channel);
                match r {
                    RssValue::Dbm(v) => {
                        let _ = writeln!(s, "{v}");
                    }
                    RssValue::Missing => s.push_str("NA\n"),
                }
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut site = None;
        let mut period = None;
        let mut nodes: Option<Vec<NodeId>> = None;
        let mut channels: Option<Vec<Channel>> = None;
        let mut empty_segments = Vec::new();
        let mut index: Option<BTreeMap<LinkId, usize>> = None;
        let mut frames: Vec<RssFrame> = Vec::new();
        let mut truth: Vec<(f64, Option<Point>)> = Vec::new();
        let mut last_t = f64::NEG_INFINITY;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
            let err = |msg: String| DflError::Parse { line, msg };
            match fields[0] {
                "H" => {
                    if index.is_some() {
                        return Err(err("header after data records".into()));
                    }
                    match fields.get(1).copied() {
                        Some("version") => {
                            let v: u32 = field(&fields, 2, line)?.parse().map_err(|_| err("bad version".into()))?;
                            if v != TRACE_VERSION {
                                return Err(err(format!("unsupported trace version {v}")));
                            }
                            version = Some(v);
                        }
                        Some("site") => {
                            site = Some((field(&fields, 2, line)?.to_string(), field(&fields, 3, line)?.to_string()))
                        }
                        Some("period") => {
                            let p = parse_f64(field(&fields, 2, line)?, line, "period")?;
                            if p <= 0.0 {
                                return Err(err("period must be positive".into()));
                            }
                            period = Some(p);
                        }
                        Some("nodes") => nodes = Some(parse_list(&fields[2..], line, "node id")?),
                        Some("channels") => channels = Some(parse_list(&fields[2..], line, "channel")?),
                        other => return Err(err(format!("unknown header {other:?}"))),
                    }
                }
                "V" => {
                    let a = parse_f64(field(&fields, 1, line)?, line, "segment start")?;
                    let b = parse_f64(field(&fields, 2, line)?, line, "segment end")?;
                    if b < a {
                        return Err(err("empty-room segment ends before it starts".into()));
                    }
                    empty_segments.push((a, b));
                }
                "R" | "G" => {
                    if index.is_none() {
                        let (Some(n), Some(c)) = (&nodes, &channels) else {
                            return Err(err("data before the nodes and channels headers".into()));
                        };
                        let probe = TraceFile {
                            site_name: String::new(),
                            site_hash: String::new(),
                            period_s: 0.0,
                            nodes: n.clone(),
                            channels: c.clone(),
                            empty_segments: Vec::new(),
                            frames: Vec::new(),
                            truth: None,
                        };
                        index = Some(probe.links().into_iter().enumerate().map(|(i, l)| (l, i)).collect());
                    }
                    let t = parse_f64(field(&fields, 1, line)?, line, "timestamp")?;
                    if t < last_t {
                        return Err(err(format!("timestamp {t} goes backwards")));
                    }
                    last_t = t;
                    if fields[0] == "G" {
                        let p = if field(&fields, 2, line)? == "OUT" {
                            None
                        } else {
                            Some(Point::new(
                                parse_f64(field(&fields, 2, line)?, line, "x")?,
                                parse_f64(field(&fields, 3, line)?, line, "y")?,
                            ))
                        };
                        if truth.last().is_some_and(|(lt, _)| *lt == t) {
                            return Err(err(format!("duplicate ground truth at t={t}")));
                        }
                        truth.push((t, p));
                        continue;
                    }
                    let num = |k: usize, what: &str| -> Result<u32> {
                        field(&fields, k, line)?.parse().map_err(|_| DflError::Parse { line, msg: format!("bad {what}") })
                    };
                    let id = LinkId {
                        tx: num(2, "tx id")?,
                        rx: num(3, "rx id")?,
                        channel: u8::try_from(num(4, "channel")?)
                            .map_err(|_| err("channel out of range".into()))?,
                    };
                    let map = index.as_ref().expect("built above");
                    let &li = map.get(&id).ok_or_else(|| err(format!("link {id} is not in the declared link set")))?;
                    let value = match field(&fields, 5, line)? {
                        "NA" => RssValue::Missing,
                        v => RssValue::Dbm(v.parse().map_err(|_| err(format!("bad rss '{v}'")))?),
                    };
                    if frames.last().is_none_or(|f| f.timestamp != t) {
                        frames.push(RssFrame { timestamp: t, values: vec![RssValue::Missing; map.len()] });
                    }
                    frames.last_mut().expect("pushed").values[li] = value;
                }
                other => return Err(err(format!("unknown record tag '{other}'"))),
            }
        }
        let missing = |what: &str| DflError::Parse { line: 0, msg: format!("missing {what} header") };
        version.ok_or_else(|| missing("version"))?;
        let (site_name, site_hash) = site.ok_or_else(|| missing("site"))?;
        let truth = if truth.is_empty() {
            None
        } else {
            if truth.len() != frames.len() || truth.iter().zip(&frames).any(|((t, _), f)| *t != f.timestamp) {
                return Err(DflError::Parse {
                    line: 0,
                    msg: "ground-truth records do not align with the frame timestamps".into(),
                });
            }
            Some(truth.into_iter().map(|(_, p)| p).collect())
        };
        Ok(TraceFile {
            site_name,
            site_hash,
            period_s: period.ok_or_else(|| missing("period"))?,
            nodes: nodes.ok_or_else(|| missing("nodes"))?,
            channels: channels.ok_or_else(|| missing("channels"))?,
            empty_segments,
            frames,
            truth,
        })
    }
}

fn field<'a>(fields: &[&'a str], k: usize, line: usize) -> Result<&'a str> {
    fields.get(k).copied().ok_or(DflError::Parse { line, msg: format!("expected at least {} fields", k + 1) })
}

fn parse_list<T: std::str::FromStr>(fields: &[&str], line: usize, what: &str) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| DflError::Parse { line, msg: format!("bad {what} '{f}'") }))
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
