use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CurvePoint, ExperimentSpec, FinalReturn, HarnessError, RunResult};
use crate::bitset::PairSet;
use crate::games::Action;

/// Metadata stored next to the per-run CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub spec_fingerprint: String,
    pub state_count: usize,
    pub pair_count: usize,
    pub n_agents: usize,
    pub checkpoints: usize,
    /// Action symbols in grid row order, e.g. "LRUD".
    pub action_set: String,
    pub best_case_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub result: RunResult,
    pub echo: String,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn corrupt(path: &Path, msg: impl Into<String>) -> HarnessError {
    HarnessError::Corrupt { path: path.display().to_string(), msg: msg.into() }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes every artifact of one run into `dir` (created if missing).
pub fn write_run(dir: &Path, spec: &ExperimentSpec, result: &RunResult) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    fs::write(dir.join("spec.echo"), spec.echo()).map_err(io_err(dir))?;
    write_file(&dir.join("curve.csv"), |w| {
        writeln!(w, "episode,mean_return,std_return,n_agents")?;
        for p in &result.curve {
            writeln!(w, "{},{},{},{}", p.episode, p.mean_return, p.std_return, p.n_agents)?;
        }
        Ok(())
    })?;
    write_file(&dir.join("per_agent_final.csv"), |w| {
        writeln!(w, "agent_index,seed,final_return")?;
        for f in &result.per_agent_final {
            writeln!(w, "{},{},{}", f.agent_index, f.seed, f.final_return)?;
        }
        Ok(())
    })?;
    write_file(&dir.join("per_agent_curves.csv"), |w| {
        writeln!(w, "agent_index,episode,mean_return")?;
        for (i, c) in result.per_agent_curves.iter().enumerate() {
            for (k, v) in c.iter().enumerate() {
                let episode = result.curve.get(k).map_or(0, |p| p.episode);
                writeln!(w, "{i},{episode},{v}")?;
            }
        }
        Ok(())
    })?;
    write_file(&dir.join("visited.bin"), |w| result.visited_union.write_to(w))?;
    write_file(&dir.join("visited_agents.bin"), |w| {
        w.write_all(&(result.per_agent_visited.len() as u64).to_le_bytes())?;
        for v in &result.per_agent_visited {
            v.write_to(&mut *w)?;
        }
        Ok(())
    })?;
    fs::write(dir.join("legal.bin"), &result.legal_masks).map_err(io_err(dir))?;
    let meta = RunMeta {
        spec_fingerprint: result.spec_fingerprint.clone(),
        state_count: result.state_count,
        pair_count: result.pair_count(),
        n_agents: result.per_agent_final.len(),
        checkpoints: result.curve.len(),
        action_set: result.action_set.iter().map(|a| a.symbol()).collect(),
        best_case_return: result.best_case_return.is_finite().then_some(result.best_case_return),
    };
    let json = serde_json::to_string_pretty(&meta).expect("run metadata serializes");
    fs::write(dir.join("run.json"), json + "\n").map_err(io_err(dir))?;
    Ok(())
}

fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<String>>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(corrupt(path, format!("expected header '{header}'")));
    }
    let width = header.split(',').count();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cols: Vec<String> = l.split(',').map(str::to_string).collect();
            if cols.len() == width {
                Ok(cols)
            } else {
                Err(corrupt(path, format!("bad row '{l}'")))
            }
        })
        .collect()
}

fn num<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T, HarnessError> {
    s.parse().map_err(|_| corrupt(path, format!("bad number '{s}'")))
}

/// Reads a run written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let meta_path = dir.join("run.json");
    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)
        .map_err(|e| corrupt(&meta_path, e.to_string()))?;
    let echo_path = dir.join("spec.echo");
    let echo = fs::read_to_string(&echo_path).map_err(io_err(&echo_path))?;

    let p = dir.join("curve.csv");
    let curve = read_csv(&p, "episode,mean_return,std_return,n_agents")?
        .iter()
        .map(|c| {
            Ok(CurvePoint {
                episode: num(&p, &c[0])?,
                mean_return: num(&p, &c[1])?,
                std_return: num(&p, &c[2])?,
                n_agents: num(&p, &c[3])?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let p = dir.join("per_agent_final.csv");
    let per_agent_final = read_csv(&p, "agent_index,seed,final_return")?
        .iter()
        .map(|c| Ok(FinalReturn { agent_index: num(&p, &c[0])?, seed: num(&p, &c[1])?, final_return: num(&p, &c[2])? }))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let p = dir.join("per_agent_curves.csv");
    let mut per_agent_curves = vec![Vec::with_capacity(meta.checkpoints); meta.n_agents];
    for c in read_csv(&p, "agent_index,episode,mean_return")? {
        let i: usize = num(&p, &c[0])?;
        per_agent_curves.get_mut(i).ok_or_else(|| corrupt(&p, "agent index out of range"))?.push(num(&p, &c[2])?);
    }

    let p = dir.join("visited.bin");
    let visited_union =
        PairSet::read_from(BufReader::new(fs::File::open(&p).map_err(io_err(&p))?)).map_err(io_err(&p))?;
    let p = dir.join("visited_agents.bin");
    let mut r = BufReader::new(fs::File::open(&p).map_err(io_err(&p))?);
    let mut n = [0u8; 8];
    r.read_exact(&mut n).map_err(io_err(&p))?;
    let per_agent_visited = (0..u64::from_le_bytes(n))
        .map(|_| PairSet::read_from(&mut r).map_err(io_err(&p)))
        .collect::<Result<Vec<_>, _>>()?;
    let p = dir.join("legal.bin");
    let legal_masks = fs::read(&p).map_err(io_err(&p))?;

    let action_set = meta
        .action_set
        .chars()
        .map(|c| Action::from_symbol(c).ok_or_else(|| corrupt(&meta_path, format!("bad action '{c}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    if visited_union.capacity() != meta.pair_count || legal_masks.len() != meta.state_count {
        return Err(corrupt(dir, "visited set or legal masks disagree with run.json"));
    }
    Ok(LoadedRun {
        result: RunResult {
            curve,
            per_agent_final,
            per_agent_curves,
            per_agent_visited,
            visited_union,
            spec_fingerprint: meta.spec_fingerprint,
            state_count: meta.state_count,
            action_set,
            legal_masks,
            best_case_return: meta.best_case_return.unwrap_or(f64::NEG_INFINITY),
        },
        echo,
    })
}
