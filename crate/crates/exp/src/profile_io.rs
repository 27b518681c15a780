//! Reading candidate profiles: trained network files (JSON) or analytic
//! equilibrium tables (CSV from `solve-analytic`).

use std::path::Path;

use oligopoly::learn::ProfileFile;
use oligopoly::policy::{feedback_profile, open_loop_profile};
use oligopoly::{LearnedProfile, MarketConfig, StrategyProfile};
use serde::Deserialize;

use crate::error::{ExpError, Result};

#[derive(Debug, Deserialize)]
struct PriceRow {
    t: usize,
    agent: usize,
    price: f64,
}

#[derive(Debug, Deserialize)]
struct FeedbackRow {
    t: usize,
    agent: usize,
    lambda1: f64,
    lambda2: f64,
}

fn table(rows: &[(usize, usize, f64)], config: &MarketConfig<f64>, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![f64::NAN; config.n_agents]; config.horizon];
    for &(t, agent, v) in rows {
        if t == 0 || t > config.horizon || agent >= config.n_agents {
            return Err(ExpError::Parse {
                path: path.display().to_string(),
                message: format!("row t={t} agent={agent} outside {} stages x {} firms", config.horizon, config.n_agents),
            });
        }
        out[t - 1][agent] = v;
    }
    if out.iter().flatten().any(|v| v.is_nan()) {
        return Err(ExpError::Parse { path: path.display().to_string(), message: "incomplete table".into() });
    }
    Ok(out)
}

/// Loads the deterministic profile stored at `path` together with the market
/// it belongs to. Network files carry their market; tables need `config`.
pub fn load_profile(path: &Path, config: Option<&MarketConfig<f64>>) -> Result<(StrategyProfile<f64>, MarketConfig<f64>)> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let reader = std::io::BufReader::new(crate::error::open_input(path)?);
        let file: ProfileFile = serde_json::from_reader(reader)
            .map_err(|e| ExpError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        let learned = LearnedProfile::<f32>::from_file(file)?;
        if let Some(c) = config {
            if *c != learned.config {
                return Err(ExpError::InvalidConfig(format!(
                    "{} was trained on a different market than --config",
                    path.display()
                )));
            }
        }
        return Ok((learned.profile(), learned.config));
    }
    let config = config
        .ok_or_else(|| ExpError::InvalidConfig("--config is required with an equilibrium table".into()))?
        .clone();
    let mut reader = csv::Reader::from_reader(crate::error::open_input(path)?);
    let headers = reader.headers()?.clone();
    if headers.iter().any(|h| h == "price") {
        let rows: Vec<PriceRow> = reader.deserialize().collect::<Result<_, _>>()?;
        let rows: Vec<_> = rows.iter().map(|r| (r.t, r.agent, r.price)).collect();
        Ok((open_loop_profile(&table(&rows, &config, path)?), config))
    } else if headers.iter().any(|h| h == "lambda1") {
        let rows: Vec<FeedbackRow> = reader.deserialize().collect::<Result<_, _>>()?;
        let l1: Vec<_> = rows.iter().map(|r| (r.t, r.agent, r.lambda1)).collect();
        let l2: Vec<_> = rows.iter().map(|r| (r.t, r.agent, r.lambda2)).collect();
        Ok((feedback_profile(&table(&l1, &config, path)?, &table(&l2, &config, path)?), config))
    } else {
        Err(ExpError::MissingColumns("price or lambda1".into()))
    }
}
