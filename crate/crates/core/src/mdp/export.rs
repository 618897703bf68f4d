//! Plain-text MDP documents.
//!
//! ```text
//! indoor-lab-mdp 1
//! game pacman
//! discount 0.9
//! rewards -1 20 -200 500
//! states <n>
//! s <id> <N|W|L> a<agent> e<e0,e1,..> i<items hex> <b<x>,<y>,<vx>,<vy> | ->
//! rows <m>
//! r <state> <action> <succ>:<prob> ...
//! end
//! ```
//!
//! Probabilities use Rust's shortest round-trip float formatting, so a
//! document read back reproduces the table bit for bit.

use std::io::{BufRead, Write};
use std::sync::Arc;

use smallvec::SmallVec;

use super::{Mdp, MdpError, RewardSpec, StateIndex, TransitionTable};
use crate::games::{Action, Ball, Configuration, GameKind, Status};

const MAGIC: &str = "indoor-lab-mdp 1";

pub fn write_mdp(mdp: &Mdp, w: impl Write) -> Result<(), MdpError> {
    write_mdp_with_table(mdp, mdp.transitions(), w)
}

/// Writes `mdp` with `table` in place of its own transitions.
pub fn write_mdp_with_table(mdp: &Mdp, table: &TransitionTable, mut w: impl Write) -> Result<(), MdpError> {
    let r = mdp.rewards();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "game {}", mdp.kind().name())?;
    writeln!(w, "discount {}", mdp.discount())?;
    writeln!(w, "rewards {} {} {} {}", r.step_penalty, r.food_reward, r.death_penalty, r.win_reward)?;
    writeln!(w, "states {}", mdp.state_count())?;
    for (id, c) in mdp.index().states().iter().enumerate() {
        let status = match mdp.status(id as u32) {
            Status::NonTerminal => 'N',
            Status::Win => 'W',
            Status::Loss => 'L',
        };
        let elements: Vec<String> = c.elements.iter().map(u16::to_string).collect();
        let ball = match c.ball {
            Some(b) => format!("b{},{},{},{}", b.x, b.y, b.vx, b.vy),
            None => "-".to_string(),
        };
        writeln!(w, "s {id} {status} a{} e{} i{:x} {ball}", c.agent, elements.join(","), c.items)?;
    }
    writeln!(w, "rows {}", table.row_count())?;
    let mut line = String::new();
    for ((s, a), succ, prob) in table.rows() {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "r {s} {}", a.symbol());
        for (j, p) in succ.iter().zip(prob) {
            let _ = write!(line, " {j}:{p}");
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

fn perr(line: usize, msg: impl Into<String>) -> MdpError {
    MdpError::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, tok: &str) -> Result<T, MdpError> {
    tok.parse().map_err(|_| perr(line, format!("bad number '{tok}'")))
}

fn parse_config(line: usize, toks: &[&str]) -> Result<Configuration, MdpError> {
    let [a, e, i, b] = toks else {
        return Err(perr(line, "state needs agent, elements, items and ball fields"));
    };
    let agent = parse_num(line, a.strip_prefix('a').ok_or_else(|| perr(line, "expected a<agent>"))?)?;
    let e = e.strip_prefix('e').ok_or_else(|| perr(line, "expected e<elements>"))?;
    let elements: SmallVec<[u16; 2]> = if e.is_empty() {
        SmallVec::new()
    } else {
        e.split(',').map(|t| parse_num(line, t)).collect::<Result<_, _>>()?
    };
    let items = u64::from_str_radix(i.strip_prefix('i').ok_or_else(|| perr(line, "expected i<items>"))?, 16)
        .map_err(|_| perr(line, "bad item mask"))?;
    let ball = if *b == "-" {
        None
    } else {
        let parts: Vec<i8> = b
            .strip_prefix('b')
            .ok_or_else(|| perr(line, "expected b<ball> or -"))?
            .split(',')
            .map(|t| parse_num(line, t))
            .collect::<Result<_, _>>()?;
        let [x, y, vx, vy] = parts[..] else {
            return Err(perr(line, "ball needs four components"));
        };
        Some(Ball { x, y, vx, vy })
    };
    Ok(Configuration { agent, elements, items, ball })
}

/// Reads a document written by [`write_mdp`]. Legal actions are recovered
/// from the row keys.
pub fn read_mdp(r: impl BufRead) -> Result<Mdp, MdpError> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = move || -> Result<(usize, String), MdpError> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(perr(0, "unexpected end of document")),
        }
    };
    let expect_kv = |(n, l): (usize, String), key: &str| -> Result<(usize, String), MdpError> {
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|rest| (n, rest.to_string()))
            .ok_or_else(|| perr(n, format!("expected '{key}'")))
    };

    let (n, magic) = next()?;
    if magic != MAGIC {
        return Err(perr(n, "not an indoor-lab MDP document"));
    }
    let (n, game) = expect_kv(next()?, "game")?;
    let kind = GameKind::from_name(&game).ok_or_else(|| perr(n, format!("unknown game '{game}'")))?;
    let (n, discount) = expect_kv(next()?, "discount")?;
    let discount: f64 = parse_num(n, &discount)?;
    let (n, rewards) = expect_kv(next()?, "rewards")?;
    let vals: Vec<f64> = rewards.split(' ').map(|t| parse_num(n, t)).collect::<Result<_, _>>()?;
    let [step_penalty, food_reward, death_penalty, win_reward] = vals[..] else {
        return Err(perr(n, "rewards needs four values"));
    };
    let rewards = RewardSpec { step_penalty, food_reward, death_penalty, win_reward };

    let (n, count) = expect_kv(next()?, "states")?;
    let count: usize = parse_num(n, &count)?;
    let mut states = Vec::with_capacity(count);
    let mut status = Vec::with_capacity(count);
    for id in 0..count {
        let (n, l) = next()?;
        let toks: Vec<&str> = l.split(' ').collect();
        if toks.len() != 7 || toks[0] != "s" || toks[1] != id.to_string() {
            return Err(perr(n, format!("expected state line for id {id}")));
        }
        status.push(match toks[2] {
            "N" => Status::NonTerminal,
            "W" => Status::Win,
            "L" => Status::Loss,
            other => return Err(perr(n, format!("bad status '{other}'"))),
        });
        states.push(parse_config(n, &toks[3..])?);
    }
    let (n, rows) = expect_kv(next()?, "rows")?;
    let rows: usize = parse_num(n, &rows)?;
    let mut table = TransitionTable::with_capacity(rows, rows * 2);
    let mut legal: Vec<Vec<Action>> = vec![Vec::new(); count];
    for _ in 0..rows {
        let (n, l) = next()?;
        let mut toks = l.split(' ');
        if toks.next() != Some("r") {
            return Err(perr(n, "expected row line"));
        }
        let s: u32 = parse_num(n, toks.next().unwrap_or(""))?;
        let a = toks
            .next()
            .and_then(|t| t.chars().next())
            .and_then(Action::from_symbol)
            .ok_or_else(|| perr(n, "bad action"))?;
        let mut entries = Vec::new();
        for t in toks {
            let (j, p) = t.split_once(':').ok_or_else(|| perr(n, format!("bad entry '{t}'")))?;
            entries.push((parse_num::<u32>(n, j)?, parse_num::<f64>(n, p)?));
        }
        if let Some(l) = legal.get_mut(s as usize) {
            l.push(a);
        } else {
            return Err(perr(n, format!("row for unknown state {s}")));
        }
        table.push_row((s, a), entries);
    }
    let (n, end) = next()?;
    if end != "end" {
        return Err(perr(n, "expected 'end'"));
    }
    let index = Arc::new(StateIndex::from_states(states)?);
    Ok(Mdp::from_parts(kind, index, legal, table, rewards, discount, status))
}
