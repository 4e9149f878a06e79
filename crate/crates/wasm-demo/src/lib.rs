//! Browser bindings. Every export returns a JSON string; errors come back
//! as `{"error": "..."}` so the page never has to catch.

use mmab_sax::env::{FeedbackMode, InstanceConfig};
use mmab_sax::harness::{self, RunConfig};
use mmab_sax::schedule;
use mmab_sax::stats::ConfidenceParams;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Longest episode the page may request.
pub const MAX_DEMO_HORIZON: u64 = 20_000_000;

fn error(msg: impl ToString) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

pub fn regret_curve_value(config_json: &str) -> Result<Value, String> {
    let inst = InstanceConfig::from_json_str(config_json).map_err(|e| e.to_string())?;
    if inst.horizon > MAX_DEMO_HORIZON {
        return Err(format!("horizon above {MAX_DEMO_HORIZON} is too long for the page"));
    }
    let r = harness::run_episode(&RunConfig::new(inst)).map_err(|e| e.to_string())?;
    Ok(json!({
        "series": r.ledger.series,
        "cumulative": r.ledger.cumulative,
        "by_phase": r.ledger.by_phase,
        "final_assignment": r.final_assignment,
        "phase1_steps": r.phase1_steps,
        "good_event": r.good_event,
        "complete": r.complete,
    }))
}

#[wasm_bindgen]
pub fn regret_curve(config_json: &str) -> String {
    regret_curve_value(config_json).map_or_else(error, |v| v.to_string())
}

/// Arm of every player at every step of one grouped session over arms 0..k.
pub fn schedule_grid_value(m: usize, k: usize, session: u32) -> Result<Value, String> {
    if m == 0 || k < m {
        return Err("need 1 <= m <= k".into());
    }
    let players: Vec<usize> = (0..m).collect();
    let arms: Vec<usize> = (0..k).collect();
    let pulls: Vec<_> = players
        .iter()
        .map(|&p| schedule::session_pulls(&players, &arms, session as u64, p))
        .collect();
    let steps: Vec<Value> = (0..pulls[0].len())
        .map(|s| {
            json!({
                "psi": pulls[0][s].psi,
                "pass": pulls[0][s].pass,
                "arms": pulls.iter().map(|p| p[s].arm).collect::<Vec<_>>(),
                "full": pulls.iter().map(|p| p[s].full).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({ "m": m, "k": k, "session": session, "steps": steps }))
}

#[wasm_bindgen]
pub fn schedule_grid(m: usize, k: usize, session: u32) -> String {
    schedule_grid_value(m, k, session).map_or_else(error, |v| v.to_string())
}

/// Counts n ≤ n_max at which the checkpoint level of n/g(n) rises.
pub fn checkpoint_sequence_value(m: usize, k: usize, delta: f64, n_max: u32, aggregate: bool) -> Result<Value, String> {
    if m == 0 || k == 0 || !(delta > 0.0 && delta < 0.5) {
        return Err("need m, k >= 1 and delta in (0, 1/2)".into());
    }
    let mode = if aggregate {
        FeedbackMode::AggregateSoft
    } else {
        FeedbackMode::HardSax
    };
    let p = ConfidenceParams::new(delta, m, k, mode);
    let points: Vec<Value> = (1..=n_max as u64)
        .filter(|&n| p.is_checkpoint(n - 1, n))
        .map(|n| json!({ "n": n, "ratio": p.ratio(n), "level": p.level(n), "radius": p.b(n) }))
        .collect();
    Ok(json!({ "base": p.base, "points": points }))
}

#[wasm_bindgen]
pub fn checkpoint_sequence(m: usize, k: usize, delta: f64, n_max: u32, aggregate: bool) -> String {
    checkpoint_sequence_value(m, k, delta, n_max, aggregate).map_or_else(error, |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let v = schedule_grid_value(3, 5, 0).unwrap();
        assert_eq!(v["steps"].as_array().unwrap().len(), 30);
        assert_eq!(v["steps"][0]["arms"], json!([0, 1, 2]));
    }

    #[test]
    fn bad_inputs_become_errors() {
        assert!(regret_curve("{").contains("error"));
        assert!(schedule_grid(4, 2, 0).contains("error"));
        assert!(checkpoint_sequence(3, 5, 0.7, 10, false).contains("error"));
    }
}
