//! Experiment output files: `games.csv`, `transfers.csv`, `summary.json`
//! and the optional `traces.jsonl`.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::write_transfers_csv;
use crate::engine::{Experiment, GameTrace, Metrics};
use crate::topology::{Topology, TopologyFile};

pub const TRACE_FORMAT_VERSION: u32 = 1;

pub const GAME_COLUMNS: [&str; 12] = [
    "round",
    "game",
    "packet_id",
    "outcome",
    "outcome_node",
    "hops",
    "source",
    "destination",
    "budget",
    "fine",
    "timeout",
    "auctions",
];

pub fn write_games_csv<W: Write>(out: W, traces: &[GameTrace]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(GAME_COLUMNS)?;
    for t in traces {
        let p = &t.packet;
        w.write_record([
            t.round.to_string(),
            t.game.to_string(),
            p.id.to_string(),
            t.outcome.label().to_string(),
            t.outcome.node().to_string(),
            p.hops.to_string(),
            p.source.to_string(),
            p.destination.to_string(),
            p.budget.to_string(),
            p.fine.to_string(),
            p.timeout.to_string(),
            t.auctions.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, metrics: &Metrics) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, metrics)?;
    out.write_all(b"\n")
}

/// First line of a trace file: everything the auditor needs besides the
/// games themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub auction_window: f64,
    pub topology: TopologyFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Game(Box<GameTrace>),
}

pub fn write_traces<W: Write>(
    mut out: W,
    topo: &Topology,
    auction_window: f64,
    traces: &[GameTrace],
) -> io::Result<()> {
    let header = TraceRecord::Header(TraceHeader {
        version: TRACE_FORMAT_VERSION,
        auction_window,
        topology: topo.to_file(),
    });
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for t in traces {
        serde_json::to_writer(&mut out, &TraceRecord::Game(Box::new(t.clone())))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace file is empty")]
    Empty,
    #[error("unsupported trace version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub games: Vec<GameTrace>,
}

pub fn read_traces<R: BufRead>(input: R) -> Result<TraceFile, TraceFileError> {
    let mut header = None;
    let mut games = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| TraceFileError::Malformed { line: i + 1, message };
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        match (rec, &header) {
            (TraceRecord::Header(h), None) => {
                if h.version != TRACE_FORMAT_VERSION {
                    return Err(TraceFileError::Version(h.version));
                }
                header = Some(h);
            }
            (TraceRecord::Header(_), Some(_)) => return Err(malformed("second header".into())),
            (TraceRecord::Game(_), None) => return Err(malformed("game before header".into())),
            (TraceRecord::Game(g), Some(_)) => games.push(*g),
        }
    }
    let header = header.ok_or(TraceFileError::Empty)?;
    Ok(TraceFile { header, games })
}

/// Writes games.csv, transfers.csv and summary.json (plus traces.jsonl
/// when asked) into `dir`.
pub fn write_outputs(
    dir: &Path,
    topo: &Topology,
    auction_window: f64,
    exp: &Experiment,
    with_traces: bool,
) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let create = |name: &str| std::fs::File::create(dir.join(name)).map(io::BufWriter::new);
    write_games_csv(create("games.csv")?, &exp.traces).map_err(io::Error::other)?;
    let transfers: Vec<_> = exp.transfers().cloned().collect();
    write_transfers_csv(create("transfers.csv")?, &transfers).map_err(io::Error::other)?;
    write_summary(create("summary.json")?, &exp.metrics)?;
    if with_traces {
        write_traces(create("traces.jsonl")?, topo, auction_window, &exp.traces)?;
    }
    Ok(())
}
