//! Long-format panel CSV: one row per unit-period with columns `unit`,
//! `period`, `outcome`, `cohort`, optional `weight`, `stratum` and
//! `exposure_only`, and any number of basis columns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use staggerspill_core::{Cohort, PanelDataset, PanelParts};

use crate::config::PanelSection;
use crate::error::{CliError, Result};

/// Units in natural order: numerically when every id is an integer,
/// lexicographically otherwise.
pub fn sort_ids(ids: &mut [String]) {
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap_or_default());
    } else {
        ids.sort();
    }
}

fn bad(msg: String) -> CliError {
    CliError::validation(msg)
}

fn parse_f64(s: &str, what: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| bad(format!("line {line}: {what} {s:?} is not numeric")))
}

fn parse_flag(s: &str, line: usize) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        _ => Err(bad(format!("line {line}: exposure_only {s:?} is not a flag"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct UnitAttrs {
    cohort: String,
    weight: Option<f64>,
    stratum: Option<String>,
    exposure_only: bool,
    basis: Vec<f64>,
}

/// Load and validate a panel. `anticipation` sets the dataset's `delta`.
pub fn read_panel(path: &Path, schema: &PanelSection, anticipation: usize) -> Result<PanelDataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::input("panel", path, &e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(format!("cannot read panel header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| bad(format!("panel has no {name:?} column")))
    };
    let (cu, cp, co, cc) = (
        need(&schema.unit)?,
        need(&schema.period)?,
        need(&schema.outcome)?,
        need(&schema.cohort)?,
    );
    let (cw, cs, ce) = (
        find(&schema.weight),
        find(&schema.stratum),
        find(&schema.exposure_only),
    );
    let named: Vec<usize> = [Some(cu), Some(cp), Some(co), Some(cc), cw, cs, ce]
        .into_iter()
        .flatten()
        .collect();
    let basis_cols: Vec<usize> = match &schema.basis {
        Some(names) => names.iter().map(|n| need(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|c| !named.contains(c)).collect(),
    };

    let mut attrs: HashMap<String, UnitAttrs> = HashMap::new();
    let mut cells: HashMap<(String, i64), f64> = HashMap::new();
    let mut periods = BTreeSet::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
        let unit = rec[cu].to_string();
        let period: i64 = rec[cp]
            .parse()
            .map_err(|_| bad(format!("line {line}: period {:?} is not an integer", &rec[cp])))?;
        let y = parse_f64(&rec[co], "outcome", line)?;
        let a = UnitAttrs {
            cohort: rec[cc].to_string(),
            weight: cw.map(|c| parse_f64(&rec[c], "weight", line)).transpose()?,
            stratum: cs.map(|c| rec[c].to_string()),
            exposure_only: ce.map(|c| parse_flag(&rec[c], line)).transpose()?.unwrap_or(false),
            basis: basis_cols
                .iter()
                .map(|&c| parse_f64(&rec[c], &header[c], line))
                .collect::<Result<_>>()?,
        };
        match attrs.get(&unit) {
            Some(prev) if prev != &a => {
                return Err(bad(format!(
                    "line {line}: unit {unit} has attributes that change over time"
                )))
            }
            Some(_) => {}
            None => {
                attrs.insert(unit.clone(), a);
            }
        }
        if cells.insert((unit.clone(), period), y).is_some() {
            return Err(bad(format!("duplicate row for unit {unit}, period {period}")));
        }
        periods.insert(period);
    }
    if attrs.is_empty() {
        return Err(bad("panel has no rows".into()));
    }
    let period_labels: Vec<i64> = periods.into_iter().collect();
    let mut unit_ids: Vec<String> = attrs.keys().cloned().collect();
    sort_ids(&mut unit_ids);
    let last = *period_labels.last().unwrap_or(&0);

    let mut outcome = Vec::with_capacity(unit_ids.len() * period_labels.len());
    for u in &unit_ids {
        for p in &period_labels {
            let y = cells
                .get(&(u.clone(), *p))
                .ok_or_else(|| bad(format!("unbalanced panel: unit {u} has no row for period {p}")))?;
            outcome.push(*y);
        }
    }
    let strata: BTreeSet<String> = attrs.values().filter_map(|a| a.stratum.clone()).collect();
    let stratum_labels: Vec<String> = strata.into_iter().collect();
    let index_of: BTreeMap<&str, u32> = stratum_labels
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k as u32))
        .collect();

    let mut parts = PanelParts {
        period_labels: period_labels.clone(),
        outcome,
        basis_names: basis_cols.iter().map(|&c| header[c].clone()).collect(),
        stratum_labels: if cs.is_some() { stratum_labels.clone() } else { Vec::new() },
        anticipation,
        ..Default::default()
    };
    for u in &unit_ids {
        let a = &attrs[u];
        let c = a.cohort.trim();
        let cohort = if c.is_empty() || c.eq_ignore_ascii_case("never") {
            Cohort::Never
        } else {
            let g: i64 = c
                .parse()
                .map_err(|_| bad(format!("unit {u}: cohort {c:?} is not a period")))?;
            if g > last {
                Cohort::Never
            } else {
                let k = period_labels
                    .iter()
                    .position(|&p| p == g)
                    .ok_or_else(|| bad(format!("unit {u}: cohort {g} is not a panel period")))?;
                Cohort::Adopts(k + 1)
            }
        };
        parts.cohort.push(cohort);
        if cw.is_some() {
            parts.weight.push(a.weight.unwrap_or(1.0));
        }
        if let Some(s) = &a.stratum {
            parts.stratum.push(index_of[s.as_str()]);
        }
        if ce.is_some() {
            parts.exposure_only.push(a.exposure_only);
        }
        parts.basis.extend_from_slice(&a.basis);
    }
    parts.unit_ids = unit_ids;
    Ok(PanelDataset::from_parts(parts)?)
}

/// Write the canonical long format; [`read_panel`] with the default schema
/// reproduces the dataset exactly.
pub fn write_panel(ds: &PanelDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    let any_exposure_only = (0..ds.n_units()).any(|i| ds.is_exposure_only(i));
    let mut header: Vec<String> = ["unit", "period", "outcome", "cohort", "weight", "stratum"]
        .map(String::from)
        .to_vec();
    if any_exposure_only {
        header.push("exposure_only".into());
    }
    header.extend(ds.basis_names().iter().cloned());
    w.write_record(&header).map_err(|e| CliError::write(path, e))?;
    let labels = ds.period_labels();
    for i in 0..ds.n_units() {
        let cohort = match ds.cohort(i) {
            Cohort::Adopts(g) => labels[g - 1].to_string(),
            Cohort::Never => "never".into(),
        };
        for t in 1..=ds.n_periods() {
            let mut row = vec![
                ds.unit_id(i).to_string(),
                labels[t - 1].to_string(),
                ds.y(i, t).to_string(),
                cohort.clone(),
                ds.weight(i).to_string(),
                ds.stratum_labels()[ds.stratum(i) as usize].clone(),
            ];
            if any_exposure_only {
                row.push((ds.is_exposure_only(i) as u8).to_string());
            }
            row.extend(ds.basis(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| CliError::write(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::write(path, e))
}
