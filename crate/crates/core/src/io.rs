//! File formats: measure and payoff JSON, solution / barrier / survival CSVs
//! with a one-line `# {json}` header, and JSON reports.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::barrier::{CaveBarrier, StopSite};
use crate::error::{Error, Result};
use crate::lattice::SiteArray;
use crate::lp::{DualSolution, PrimalSolution};
use crate::measure::{Grid, MeasureSpec};
use crate::payoff::PayoffGrid;
use crate::sim::{SimResult, StudyRow};
use crate::survival::SurvivalTable;

/// Full-precision decimal.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {msg}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `{"atoms": [[x, mass], ...]}`.
pub fn read_measure(path: &Path) -> Result<MeasureSpec> {
    read_json(path)
}

/// `{"x": [...], "t": [...], "values": [[...], ...]}` with one row per `x`.
pub fn read_payoff_grid(path: &Path) -> Result<PayoffGrid> {
    let grid: PayoffGrid = read_json(path)?;
    grid.validate()?;
    Ok(grid)
}

/// Split a `# {json}` header line from CSV text.
fn split_header<H: DeserializeOwned>(path: &Path) -> Result<(H, String)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, "missing '# {json}' header line"))?;
    let header = serde_json::from_str(json.trim()).map_err(|e| parse_err(path, format!("header: {e}")))?;
    let mut body = String::new();
    reader.read_to_string(&mut body)?;
    Ok((header, body))
}

fn csv_rows<R: DeserializeOwned>(path: &Path, body: &str, columns: &[&str]) -> Result<Vec<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let found: Vec<String> = rdr.headers().map_err(|e| parse_err(path, e))?.iter().map(str::to_owned).collect();
    if found != columns {
        return Err(parse_err(path, format!("expected columns {columns:?}, found {found:?}")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| parse_err(path, e)))
        .collect()
}

/// Header of a solution CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionHeader {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub j_lo: i64,
    pub j_hi: i64,
    pub j_star: i64,
    pub objective: f64,
    pub tilted_objective: f64,
    pub gap: f64,
    /// Tilt constant `C` per unit time.
    pub tilt: f64,
    pub payoff: String,
}

impl SolutionHeader {
    pub fn grid(&self) -> Result<Grid> {
        let g = Grid::from_indices(self.j_lo, self.j_hi, self.n)?;
        if !(g.j_lo..=g.j_hi).contains(&self.j_star) {
            return Err(Error::Parse(format!("start index {} outside grid", self.j_star)));
        }
        Ok(Grid { j_star: self.j_star, ..g })
    }
}

#[derive(Deserialize)]
struct SiteRow {
    j: i64,
    t: usize,
    p: f64,
    q: f64,
}

/// Rows `j,t,p,q` over every reachable site up to `T + 1`.
pub fn write_solution(path: &Path, header: &SolutionHeader, primal: &PrimalSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {}", serde_json::to_string(header)?)?;
    writeln!(w, "j,t,p,q")?;
    let g = primal.grid;
    for t in 0..=primal.p.t_max() {
        for j in g.all_levels() {
            if g.reachable(j, t) {
                let (p, q) = (primal.p.get(j, t), primal.q.get(j, t));
                writeln!(w, "{j},{t},{},{}", fmt_f64(p), fmt_f64(q))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a solution CSV back into `(header, p, q)`.
pub fn read_solution(path: &Path) -> Result<(SolutionHeader, SiteArray, SiteArray)> {
    let (header, body): (SolutionHeader, _) = split_header(path)?;
    let g = header.grid()?;
    let t_max = header.horizon + 1;
    let mut p = SiteArray::zeros(g.j_lo, g.j_hi, t_max);
    let mut q = SiteArray::zeros(g.j_lo, g.j_hi, t_max);
    let rows: Vec<SiteRow> = csv_rows(path, &body, &["j", "t", "p", "q"])?;
    let expected = (0..=t_max).map(|t| g.all_levels().filter(|&j| g.reachable(j, t)).count()).sum::<usize>();
    if rows.len() != expected {
        return Err(parse_err(path, format!("expected {expected} rows, found {}", rows.len())));
    }
    for r in rows {
        if r.j < g.j_lo || r.j > g.j_hi || r.t > t_max {
            return Err(parse_err(path, format!("site ({}, {}) outside the lattice", r.j, r.t)));
        }
        p.set(r.j, r.t, r.p);
        q.set(r.j, r.t, r.q);
    }
    Ok((header, p, q))
}

/// Dual variables, with `eta` listed only where nonzero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFile {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub tilted_objective: f64,
    pub objective: f64,
    pub nu: Vec<(i64, f64)>,
    pub eta: Vec<(i64, usize, f64)>,
}

impl DualFile {
    pub fn from_dual(dual: &DualSolution, horizon: usize) -> Self {
        let g = dual.grid;
        Self {
            n: g.n,
            horizon,
            tilted_objective: dual.tilted_objective,
            objective: dual.objective,
            nu: g.all_levels().map(|j| (j, dual.nu(j))).collect(),
            eta: dual.eta.iter().filter(|&(_, _, v)| v != 0.0).collect(),
        }
    }

    pub fn into_dual(self, grid: &Grid) -> Result<DualSolution> {
        let mut nu = vec![0.0; grid.levels() + 1];
        for (j, v) in self.nu {
            if j < grid.j_lo || j > grid.j_hi {
                return Err(Error::Parse(format!("nu level {j} outside grid")));
            }
            nu[(j - grid.j_lo) as usize] = v;
        }
        let mut eta = SiteArray::zeros(grid.j_lo, grid.j_hi, self.horizon + 1);
        for (j, t, v) in self.eta {
            if j < grid.j_lo || j > grid.j_hi || t > self.horizon + 1 {
                return Err(Error::Parse(format!("eta site ({j}, {t}) outside lattice")));
            }
            eta.set(j, t, v);
        }
        Ok(DualSolution {
            grid: *grid,
            nu,
            eta,
            tilted_objective: self.tilted_objective,
            objective: self.objective,
        })
    }
}

pub fn write_dual(path: &Path, dual: &DualSolution, horizon: usize) -> Result<()> {
    write_json(path, &DualFile::from_dual(dual, horizon))
}

pub fn read_dual(path: &Path, grid: &Grid) -> Result<DualSolution> {
    read_json::<DualFile>(path)?.into_dual(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BarrierHeader {
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "T")]
    horizon: usize,
    j_lo: i64,
    j_hi: i64,
    j_star: i64,
    t0_index: usize,
    /// Uncovered stop sites `(j, t, p, q)`.
    extras: Vec<(i64, usize, f64, f64)>,
}

#[derive(Deserialize)]
struct BarrierRow {
    j: i64,
    #[allow(dead_code)]
    x: f64,
    l_over_n: f64,
    r_over_n: f64,
}

/// Rows `j,x,l_over_N,r_over_N`; sentinel cutoffs are written as
/// `-1/N` and `(T+1)/N`. Extra stop sites ride in the header.
pub fn write_barrier(path: &Path, b: &CaveBarrier) -> Result<()> {
    let g = b.grid;
    let header = BarrierHeader {
        n: g.n,
        horizon: b.horizon,
        j_lo: g.j_lo,
        j_hi: g.j_hi,
        j_star: g.j_star,
        t0_index: b.t0_index,
        extras: b.extras.iter().map(|s| (s.j, s.t, s.p, s.q)).collect(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {}", serde_json::to_string(&header)?)?;
    writeln!(w, "j,x,l_over_N,r_over_N")?;
    let n = g.n as f64;
    for j in g.all_levels() {
        let (l, r) = (b.l_bar(j) as f64 / n, b.r_bar(j) as f64 / n);
        writeln!(w, "{j},{},{},{}", fmt_f64(g.x(j)), fmt_f64(l), fmt_f64(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_barrier(path: &Path) -> Result<CaveBarrier> {
    let (header, body): (BarrierHeader, _) = split_header(path)?;
    let g = Grid::from_indices(header.j_lo, header.j_hi, header.n)?;
    let grid = Grid { j_star: header.j_star, ..g };
    let rows: Vec<BarrierRow> = csv_rows(path, &body.replace("l_over_N", "l_over_n").replace("r_over_N", "r_over_n"), &["j", "x", "l_over_n", "r_over_n"])?;
    if rows.len() != grid.levels() + 1 {
        return Err(parse_err(path, format!("expected {} levels, found {}", grid.levels() + 1, rows.len())));
    }
    let n = grid.n as f64;
    let mut l_bar = vec![0; rows.len()];
    let mut r_bar = vec![0; rows.len()];
    for r in rows {
        if r.j < grid.j_lo || r.j > grid.j_hi {
            return Err(parse_err(path, format!("level {} outside grid", r.j)));
        }
        let k = (r.j - grid.j_lo) as usize;
        l_bar[k] = (r.l_over_n * n).round() as i64;
        r_bar[k] = (r.r_over_n * n).round() as i64;
    }
    let extras = header
        .extras
        .into_iter()
        .map(|(j, t, p, q)| StopSite {
            j,
            t,
            p,
            q,
            stop_probability: if p + q > 0.0 { q / (p + q) } else { 1.0 },
        })
        .collect();
    Ok(CaveBarrier {
        grid,
        horizon: header.horizon,
        t0_index: header.t0_index,
        l_bar,
        r_bar,
        extras,
    })
}

/// Rows `j,t,pi` over reachable sites.
pub fn write_pi(path: &Path, table: &SurvivalTable) -> Result<()> {
    let g = table.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "j,t,pi")?;
    for t in 0..=table.horizon() {
        for j in g.all_levels() {
            if g.reachable(j, t) {
                writeln!(w, "{j},{t},{}", fmt_f64(table.pi(j, t)))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows `N,T,P,gap,mc_distance,mc_se,barrier_distance` (empty when no
/// shared cutoffs).
pub fn write_study(path: &Path, rows: &[StudyRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "N,T,P,gap,mc_distance,mc_se,barrier_distance")?;
    for r in rows {
        let d = r.barrier_distance.map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{d}",
            r.n,
            r.horizon,
            fmt_f64(r.value),
            fmt_f64(r.gap),
            fmt_f64(r.mc_distance),
            fmt_f64(r.mc_se)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `j,t,count` of a simulation's stop histogram, header with run data.
pub fn write_sim(path: &Path, sim: &SimResult) -> Result<()> {
    #[derive(Serialize)]
    struct Header {
        #[serde(rename = "N")]
        n: u64,
        paths: u64,
        seed: u64,
        censored: u64,
        mean_time: f64,
        second_moment: f64,
    }
    let header = Header {
        n: sim.grid.n,
        paths: sim.n_paths,
        seed: sim.seed,
        censored: sim.censored,
        mean_time: sim.mean_time().0,
        second_moment: sim.second_moment().0,
    };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {}", serde_json::to_string(&header)?)?;
    writeln!(w, "j,t,count")?;
    for (&(j, t), &c) in &sim.stops {
        writeln!(w, "{j},{t},{c}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::extract;
    use crate::pipeline::{run, Config};
    use crate::payoff::PayoffSpec;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("optsep-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn solution_round_trip_is_exact() {
        let spec = MeasureSpec::new(vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]);
        let (prep, sol) = run(&spec, &PayoffSpec::root(), &Config::new(4)).unwrap();
        let header = SolutionHeader {
            n: 4,
            horizon: prep.horizon,
            j_lo: prep.grid.j_lo,
            j_hi: prep.grid.j_hi,
            j_star: prep.grid.j_star,
            objective: sol.primal.objective,
            tilted_objective: sol.primal.tilted_objective,
            gap: sol.gap,
            tilt: prep.table.tilt_constant(),
            payoff: "root".into(),
        };
        let path = tmp("sol.csv");
        write_solution(&path, &header, &sol.primal).unwrap();
        let (h, p, q) = read_solution(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(p, sol.primal.p);
        assert_eq!(q, sol.primal.q);

        let dpath = tmp("dual.json");
        write_dual(&dpath, &sol.dual, prep.horizon).unwrap();
        let d = read_dual(&dpath, &prep.grid).unwrap();
        assert_eq!(d.nu, sol.dual.nu);
        for (j, t, v) in sol.dual.eta.iter() {
            assert_eq!(d.eta.get(j, t).to_bits(), v.to_bits(), "eta({j}, {t})");
        }

        let bpath = tmp("barrier.csv");
        let b = extract(&sol.primal, prep.hinge);
        write_barrier(&bpath, &b).unwrap();
        assert_eq!(read_barrier(&bpath).unwrap(), b);
    }

    #[test]
    fn truncated_solution_is_a_parse_error() {
        let path = tmp("bad.csv");
        std::fs::write(&path, "# {\"N\": 4, \"T\": 2, \"j_lo\"").unwrap();
        assert!(matches!(read_solution(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "j,t,p,q\n0,0,1,0\n").unwrap();
        assert!(matches!(read_solution(&path), Err(Error::Parse(_))));
    }
}
