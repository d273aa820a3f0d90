//! File formats: sample CSVs, run statistics JSON, adjacency matrices, and game
//! records.
//!
//! Sample CSVs carry positions at 17 significant digits so that re-parsing
//! reproduces the doubles bit-for-bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use magmcmc_core::diagnostics::EssReport;
use magmcmc_core::sampler::ChainOutput;
use magmcmc_core::target::GameRecord;
use magmcmc_core::{Matrix, Vector};
use serde::Serialize;

/// Writes `samples.csv` with header `idx,q0..q{m-1},H,accepted`.
pub fn write_samples_csv(path: &Path, out: &ChainOutput) -> Result<(), String> {
    let file = File::create(path).map_err(|e| format!("create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    let m = out.samples.ncols();
    let mut header = String::from("idx");
    for j in 0..m {
        header.push_str(&format!(",q{j}"));
    }
    header.push_str(",H,accepted");
    writeln!(w, "{header}").map_err(|e| e.to_string())?;
    for i in 0..out.samples.nrows() {
        let mut line = format!("{i}");
        for j in 0..m {
            line.push_str(&format!(",{:.16e}", out.samples[(i, j)]));
        }
        line.push_str(&format!(
            ",{:.16e},{}",
            out.hamiltonian_values[i],
            u8::from(out.accept_flags[i])
        ));
        writeln!(w, "{line}").map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

/// Reads a samples CSV back, validating every field, and returns the position
/// block (one row per draw).
pub fn read_samples_csv(path: &Path) -> Result<Matrix, String> {
    let file = File::open(path).map_err(|e| format!("open {}: {e}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or("empty file")?
        .map_err(|e| e.to_string())?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || cols[0] != "idx" || cols[cols.len() - 2] != "H" {
        return Err("unrecognized samples header".into());
    }
    let m = cols.len() - 3;
    for (j, name) in cols[1..1 + m].iter().enumerate() {
        if *name != format!("q{j}") {
            return Err(format!("unexpected column '{name}' where q{j} expected"));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(format!("row {}: wrong field count", lineno + 2));
        }
        let mut q = Vec::with_capacity(m);
        for f in &fields[1..1 + m] {
            q.push(
                f.parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", lineno + 2))?,
            );
        }
        fields[1 + m]
            .parse::<f64>()
            .map_err(|e| format!("row {}: bad H field: {e}", lineno + 2))?;
        if !matches!(fields[2 + m], "0" | "1") {
            return Err(format!("row {}: accepted must be 0/1", lineno + 2));
        }
        rows.push(q);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    let mut positions = Matrix::zeros(rows.len(), m);
    for (i, q) in rows.iter().enumerate() {
        for (j, x) in q.iter().enumerate() {
            positions[(i, j)] = *x;
        }
    }
    Ok(positions)
}

/// Whitespace-separated 0/1 matrix, one row per line. Must be square, symmetric,
/// and zero on the diagonal.
pub fn parse_adjacency(path: &Path) -> Result<Matrix, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read adjacency {}: {e}", path.display()))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| match t {
                    "0" => Ok(0.0),
                    "1" => Ok(1.0),
                    other => Err(format!("adjacency entries must be 0/1, found '{other}'")),
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err("adjacency matrix must be square".into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let delta = Matrix::from_row_slice(n, n, &flat);
    if (&delta - delta.transpose()).amax() != 0.0 {
        return Err("adjacency matrix must be symmetric".into());
    }
    for i in 0..n {
        if delta[(i, i)] != 0.0 {
            return Err("adjacency matrix must have a zero diagonal".into());
        }
    }
    Ok(delta)
}

/// Game records CSV with header `teamA,teamB,winnerA`; team fields are
/// semicolon-separated 0-based player indices, winnerA is 0 or 1.
pub fn parse_games_csv(path: &Path) -> Result<Vec<GameRecord>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read games {}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("games file is empty")?;
    if header.trim() != "teamA,teamB,winnerA" {
        return Err(format!("expected header 'teamA,teamB,winnerA', found '{header}'"));
    }
    let parse_team = |s: &str| -> Result<Vec<usize>, String> {
        s.split(';')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad player index '{t}': {e}"))
            })
            .collect()
    };
    let mut games = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 3 {
            return Err(format!("games row {}: expected 3 fields", lineno + 2));
        }
        let team_a = parse_team(fields[0])?;
        let team_b = parse_team(fields[1])?;
        if team_a.iter().any(|i| team_b.contains(i)) {
            return Err(format!("games row {}: teams are not disjoint", lineno + 2));
        }
        let winner_a = match fields[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(format!("games row {}: winnerA must be 0/1, found '{other}'", lineno + 2)),
        };
        games.push(GameRecord {
            team_a,
            team_b,
            winner_a,
        });
    }
    Ok(games)
}

#[derive(Serialize)]
pub struct EssStats {
    pub per_coordinate: Vec<f64>,
    pub min: f64,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_per_second: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_per_second: Option<f64>,
    pub ceiling: f64,
}

impl From<&EssReport> for EssStats {
    fn from(r: &EssReport) -> Self {
        Self {
            per_coordinate: r.per_coordinate.clone(),
            min: r.min_ess,
            mean: r.mean_ess,
            min_per_second: r.min_per_second,
            mean_per_second: r.mean_per_second,
            ceiling: r.truncation_ceiling,
        }
    }
}

/// Per-chain `stats.json`.
#[derive(Serialize)]
pub struct ChainStats {
    pub schema: u32,
    pub sampler: String,
    pub step_size: f64,
    pub num_steps: usize,
    pub num_samples: usize,
    pub burn_in: usize,
    pub master_seed: u64,
    pub chain_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_seed: Option<u64>,
    pub acceptance_rate: f64,
    pub newton_failure_count: usize,
    pub wall_time_seconds: f64,
    pub ess: EssStats,
    /// The magnetic structure used by this chain, row-major.
    pub field_l: Vec<Vec<f64>>,
}

pub fn write_stats_json(path: &Path, stats: &ChainStats) -> Result<(), String> {
    let file = File::create(path).map_err(|e| format!("create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, stats).map_err(|e| e.to_string())?;
    writeln!(w).map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())
}

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Writes a geodesic trace CSV: forward leg then backward leg, one row per
/// state, with the SO(3) action on (1,1,1)ᵀ appended when requested.
pub fn write_geodesic_csv(
    path: &Path,
    forward: &[Vector],
    backward: &[Vector],
    with_so3_action: bool,
) -> Result<(), String> {
    let file = File::create(path).map_err(|e| format!("create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    let m = forward[0].len();
    let mut header = String::from("leg,idx");
    for j in 0..m {
        header.push_str(&format!(",q{j}"));
    }
    if with_so3_action {
        header.push_str(",act0,act1,act2");
    }
    writeln!(w, "{header}").map_err(|e| e.to_string())?;
    let mut dump = |leg: &str, states: &[Vector]| -> Result<(), String> {
        for (i, q) in states.iter().enumerate() {
            let mut line = format!("{leg},{i}");
            for x in q.iter() {
                line.push_str(&format!(",{x:.16e}"));
            }
            if with_so3_action {
                let n = (m as f64).sqrt() as usize;
                let rot = Matrix::from_column_slice(n, n, q.as_slice());
                let act = rot * Vector::from_element(n, 1.0);
                for x in act.iter() {
                    line.push_str(&format!(",{x:.16e}"));
                }
            }
            writeln!(w, "{line}").map_err(|e| e.to_string())?;
        }
        Ok(())
    };
    dump("fwd", forward)?;
    dump("bwd", backward)?;
    w.flush().map_err(|e| e.to_string())
}
