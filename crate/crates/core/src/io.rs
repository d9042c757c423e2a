//! JSON file formats for scenarios, behaviors, wirings and harness reports.
//!
//! Probabilities are `"num/den"` strings; decimals (as strings or JSON
//! numbers) are accepted and converted exactly. Outcome tuples are keyed
//! by comma-joined outcome labels in the context's measurement order, and
//! missing entries mean probability zero. A scenario or behavior nested in
//! another file may be given inline or as a path relative to that file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::behavior::Behavior;
use crate::quantifiers::{QuantValue, QuantifierResult, Witness};
use crate::rational::{format_rational, parse_rational, Rational};
use crate::scenario::{Scenario, ScenarioError, ScenarioSpec};
use crate::wirings::{MonotonicityReport, NcWiring, PostProcessing, PreProcessing, PreservationReport, ResponseKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("invariant violated ({invariant}): {message}")]
    Invariant { invariant: String, message: String },
}

fn field(path: &str, message: impl Into<String>) -> IoError {
    IoError::Field { field: path.to_string(), message: message.into() }
}

fn invariant(err: impl std::fmt::Display) -> IoError {
    let message = err.to_string();
    let invariant = if message.starts_with("normalization") {
        "normalization"
    } else if message.contains("outside [0,1]") {
        "probability range"
    } else if message.contains("disturbing") {
        "non-disturbance"
    } else if message.starts_with("invalid scenario") {
        "scenario"
    } else {
        "consistency"
    };
    IoError::Invariant { invariant: invariant.into(), message }
}

fn parse_json(text: &str) -> Result<Value, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::File { path: path.display().to_string(), message: e.to_string() })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::File { path: path.display().to_string(), message: e.to_string() })
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, IoError> {
    value.as_object().ok_or_else(|| field(path, "expected an object"))
}

fn as_str<'a>(value: &'a Value, path: &str) -> Result<&'a str, IoError> {
    value.as_str().ok_or_else(|| field(path, "expected a string"))
}

fn rational_value(value: &Value, path: &str) -> Result<Rational, IoError> {
    let text = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(field(path, "expected a probability such as \"1/3\" or 0.25")),
    };
    parse_rational(&text).map_err(|e| field(path, e.to_string()))
}

// ---------------------------------------------------------------- scenarios

pub fn scenario_to_value(s: &Scenario) -> Value {
    serde_json::to_value(s.to_spec()).expect("spec serializes")
}

fn scenario_from_value(value: &Value, path: &str, base: &Path) -> Result<Scenario, IoError> {
    match value {
        Value::String(rel) => load_scenario(&base.join(rel)),
        Value::Object(_) => {
            let spec: ScenarioSpec =
                serde_json::from_value(value.clone()).map_err(|e| field(path, e.to_string()))?;
            Scenario::try_from(spec).map_err(invariant)
        }
        _ => Err(field(path, "expected a scenario object or a path")),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, IoError> {
    scenario_from_value(&parse_json(text)?, "$", Path::new(""))
}

/// Parses without validating, so diagnostics can be reported.
pub fn parse_scenario_spec(text: &str) -> Result<ScenarioSpec, IoError> {
    serde_json::from_value(parse_json(text)?).map_err(|e| field("$", e.to_string()))
}

pub fn scenario_to_string(s: &Scenario) -> String {
    pretty(&scenario_to_value(s))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let value = parse_json(&read(path)?)?;
    scenario_from_value(&value, "$", &base_of(path))
}

pub fn store_scenario(path: &Path, s: &Scenario) -> Result<(), IoError> {
    write(path, &scenario_to_string(s))
}

// ---------------------------------------------------------------- behaviors

fn tables_to_value(b: &Behavior) -> Value {
    let s = b.scenario();
    let mut tables = Map::new();
    for c in 0..s.num_contexts() {
        let mut table = Map::new();
        for (idx, p) in b.table(c).iter().enumerate() {
            if !p.is_zero() {
                table.insert(s.tuple_key(&s.decode_tuple(c, idx)), Value::String(format_rational(p)));
            }
        }
        tables.insert(c.to_string(), Value::Object(table));
    }
    Value::Object(tables)
}

/// Behavior with its scenario inlined and zero entries omitted.
pub fn behavior_to_value(b: &Behavior) -> Value {
    json!({ "scenario": scenario_to_value(b.scenario()), "tables": tables_to_value(b) })
}

fn tuple_from_key(s: &Scenario, context: usize, key: &str, path: &str) -> Result<usize, IoError> {
    let labels: Vec<&str> = key.split(',').map(str::trim).collect();
    if labels.len() != s.context(context).len() {
        return Err(field(
            path,
            format!("outcome tuple has {} labels, context {{{}}} has {} measurements", labels.len(), s.context_names(context).join(","), s.context(context).len()),
        ));
    }
    let tuple = labels
        .iter()
        .map(|l| s.outcome_index(l).ok_or_else(|| field(path, format!("unknown outcome `{l}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(s.encode_tuple(&tuple))
}

/// A context key is its index or its comma-joined measurement names.
fn context_from_key(s: &Scenario, key: &str, path: &str) -> Result<usize, IoError> {
    if let Ok(c) = key.parse::<usize>() {
        return if c < s.num_contexts() { Ok(c) } else { Err(field(path, format!("no context with index {c}"))) };
    }
    let ms = key
        .split(',')
        .map(|m| s.measurement_index(m.trim()).ok_or_else(|| field(path, format!("unknown measurement `{m}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    s.find_context(&ms).ok_or_else(|| field(path, format!("`{key}` is not a context")))
}

fn behavior_from_value(value: &Value, path: &str, base: &Path) -> Result<Behavior, IoError> {
    if let Value::String(rel) = value {
        return load_behavior(&base.join(rel));
    }
    let obj = as_object(value, path)?;
    let scenario_path = format!("{path}.scenario");
    let scenario = Arc::new(scenario_from_value(
        obj.get("scenario").ok_or_else(|| field(&scenario_path, "missing"))?,
        &scenario_path,
        base,
    )?);
    let tables_path = format!("{path}.tables");
    let tables_obj = as_object(obj.get("tables").ok_or_else(|| field(&tables_path, "missing"))?, &tables_path)?;
    let mut tables: Vec<Vec<Rational>> =
        (0..scenario.num_contexts()).map(|c| vec![Rational::zero(); scenario.table_len(c)]).collect();
    for (ckey, table) in tables_obj {
        let cpath = format!("{tables_path}.\"{ckey}\"");
        let c = context_from_key(&scenario, ckey, &cpath)?;
        for (tkey, p) in as_object(table, &cpath)? {
            let epath = format!("{cpath}.\"{tkey}\"");
            let idx = tuple_from_key(&scenario, c, tkey, &epath)?;
            tables[c][idx] = rational_value(p, &epath)?;
        }
    }
    Behavior::new(scenario, tables).map_err(invariant)
}

pub fn parse_behavior(text: &str, base: &Path) -> Result<Behavior, IoError> {
    behavior_from_value(&parse_json(text)?, "$", base)
}

pub fn behavior_to_string(b: &Behavior) -> String {
    pretty(&behavior_to_value(b))
}

pub fn load_behavior(path: &Path) -> Result<Behavior, IoError> {
    let value = parse_json(&read(path)?)?;
    behavior_from_value(&value, "$", &base_of(path))
}

pub fn store_behavior(path: &Path, b: &Behavior) -> Result<(), IoError> {
    write(path, &behavior_to_string(b))
}

// ---------------------------------------------------------------- wirings

fn distribution_to_value(s: &Scenario, dist: &[Rational]) -> Value {
    let mut m = Map::new();
    for (o, p) in dist.iter().enumerate() {
        if !p.is_zero() {
            m.insert(s.outcomes()[o].clone(), Value::String(format_rational(p)));
        }
    }
    Value::Object(m)
}

fn distribution_from_value(s: &Scenario, value: &Value, path: &str) -> Result<Vec<Rational>, IoError> {
    let mut dist = vec![Rational::zero(); s.num_outcomes()];
    for (label, p) in as_object(value, path)? {
        let epath = format!("{path}.\"{label}\"");
        let o = s.outcome_index(label).ok_or_else(|| field(&epath, format!("unknown outcome `{label}`")))?;
        dist[o] = rational_value(p, &epath)?;
    }
    Ok(dist)
}

/// `{measurement: {outcome: measurement}}` over two scenarios.
fn label_map_to_value(from: &Scenario, to: &Scenario, map: &[Vec<usize>]) -> Value {
    let mut outer = Map::new();
    for (m, row) in map.iter().enumerate() {
        let mut inner = Map::new();
        for (o, &t) in row.iter().enumerate() {
            inner.insert(from.outcomes()[o].clone(), Value::String(to.measurements()[t].clone()));
        }
        outer.insert(from.measurements()[m].clone(), Value::Object(inner));
    }
    Value::Object(outer)
}

fn label_map_from_value(from: &Scenario, to: &Scenario, value: &Value, path: &str) -> Result<Vec<Vec<usize>>, IoError> {
    let obj = as_object(value, path)?;
    let mut map = vec![vec![usize::MAX; from.num_outcomes()]; from.num_measurements()];
    for (mname, row) in obj {
        let mpath = format!("{path}.\"{mname}\"");
        let m = from.measurement_index(mname).ok_or_else(|| field(&mpath, format!("unknown measurement `{mname}`")))?;
        for (olabel, t) in as_object(row, &mpath)? {
            let opath = format!("{mpath}.\"{olabel}\"");
            let o = from.outcome_index(olabel).ok_or_else(|| field(&opath, format!("unknown outcome `{olabel}`")))?;
            let tname = as_str(t, &opath)?;
            map[m][o] = to.measurement_index(tname).ok_or_else(|| field(&opath, format!("unknown measurement `{tname}`")))?;
        }
    }
    for (m, row) in map.iter().enumerate() {
        if let Some(o) = row.iter().position(|&t| t == usize::MAX) {
            return Err(field(
                path,
                format!("no entry for measurement `{}` with outcome `{}`", from.measurements()[m], from.outcomes()[o]),
            ));
        }
    }
    Ok(map)
}

pub fn wiring_to_value(w: &NcWiring) -> Value {
    let pre_s = w.pre.scenario();
    let post_s = &w.post.scenario;
    let responses: Map<String, Value> = w
        .post
        .responses
        .iter()
        .enumerate()
        .map(|(f, table)| {
            let mut per_button: BTreeMap<String, Map<String, Value>> = BTreeMap::new();
            for (key, dist) in table {
                let entry = per_button.entry(post_s.measurements()[key.post].clone()).or_default();
                let d = distribution_to_value(post_s, dist);
                match key.given {
                    None => {
                        entry.insert("*".into(), d);
                    }
                    Some((m, o)) => {
                        let inner = entry
                            .entry(pre_s.measurements()[m].clone())
                            .or_insert_with(|| Value::Object(Map::new()));
                        inner.as_object_mut().expect("object").insert(pre_s.outcomes()[o].clone(), d);
                    }
                }
            }
            let per_button: Map<String, Value> = per_button.into_iter().map(|(k, v)| (k, Value::Object(v))).collect();
            (f.to_string(), Value::Object(per_button))
        })
        .collect();
    json!({
        "target": scenario_to_value(&w.target),
        "pre": {
            "behavior": behavior_to_value(&w.pre.pre_box),
            "lightToButton": label_map_to_value(pre_s, &w.target, &w.pre.light_to_button),
        },
        "post": {
            "scenario": scenario_to_value(post_s),
            "buttonFromLight": label_map_to_value(&w.target, post_s, &w.post.button_from_light),
            "phi": w.post.phi.iter().map(|p| Value::String(format_rational(p))).collect::<Vec<_>>(),
            "responses": Value::Object(responses),
        }
    })
}

fn pre_from_value(value: &Value, target: &Arc<Scenario>, base: &Path) -> Result<PreProcessing, IoError> {
    let obj = as_object(value, "$.pre")?;
    let pre_box = behavior_from_value(obj.get("behavior").ok_or_else(|| field("$.pre.behavior", "missing"))?, "$.pre.behavior", base)?;
    let map_value = obj.get("lightToButton").ok_or_else(|| field("$.pre.lightToButton", "missing"))?;
    let light_to_button = label_map_from_value(pre_box.scenario(), target, map_value, "$.pre.lightToButton")?;
    Ok(PreProcessing::new(pre_box, light_to_button))
}

fn post_from_value(value: &Value, target: &Arc<Scenario>, pre: &Scenario, base: &Path) -> Result<PostProcessing, IoError> {
    let obj = as_object(value, "$.post")?;
    let scenario =
        Arc::new(scenario_from_value(obj.get("scenario").ok_or_else(|| field("$.post.scenario", "missing"))?, "$.post.scenario", base)?);
    let map_value = obj.get("buttonFromLight").ok_or_else(|| field("$.post.buttonFromLight", "missing"))?;
    let button_from_light = label_map_from_value(target, &scenario, map_value, "$.post.buttonFromLight")?;
    let phi = match obj.get("phi") {
        None => vec![Rational::from_integer(1.into())],
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, p)| rational_value(p, &format!("$.post.phi[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(field("$.post.phi", "expected an array of probabilities")),
    };
    let resp_obj = as_object(obj.get("responses").ok_or_else(|| field("$.post.responses", "missing"))?, "$.post.responses")?;
    let mut responses = vec![BTreeMap::new(); phi.len()];
    for (fkey, per_button) in resp_obj {
        let fpath = format!("$.post.responses.\"{fkey}\"");
        let f: usize = fkey.parse().ok().filter(|&f| f < phi.len()).ok_or_else(|| field(&fpath, "not an index into phi"))?;
        for (bname, given) in as_object(per_button, &fpath)? {
            let bpath = format!("{fpath}.\"{bname}\"");
            let post = scenario.measurement_index(bname).ok_or_else(|| field(&bpath, format!("unknown post-box measurement `{bname}`")))?;
            for (gkey, inner) in as_object(given, &bpath)? {
                let gpath = format!("{bpath}.\"{gkey}\"");
                if gkey == "*" {
                    responses[f].insert(ResponseKey { post, given: None }, distribution_from_value(&scenario, inner, &gpath)?);
                    continue;
                }
                let m = pre.measurement_index(gkey).ok_or_else(|| field(&gpath, format!("unknown pre-box measurement `{gkey}`")))?;
                for (olabel, dist) in as_object(inner, &gpath)? {
                    let opath = format!("{gpath}.\"{olabel}\"");
                    let o = pre.outcome_index(olabel).ok_or_else(|| field(&opath, format!("unknown pre-box outcome `{olabel}`")))?;
                    responses[f].insert(ResponseKey { post, given: Some((m, o)) }, distribution_from_value(&scenario, dist, &opath)?);
                }
            }
        }
    }
    Ok(PostProcessing::new(scenario, button_from_light, phi, responses))
}

/// Reads a wiring. The target scenario comes from `target` or else from
/// the file's `"target"` field; a missing `"pre"` or `"post"` section
/// means the identity on that side. No validation is performed.
pub fn parse_wiring(text: &str, base: &Path, target: Option<&Arc<Scenario>>) -> Result<NcWiring, IoError> {
    let value = parse_json(text)?;
    let obj = as_object(&value, "$")?;
    let target = match (target, obj.get("target")) {
        (Some(t), _) => t.clone(),
        (None, Some(v)) => Arc::new(scenario_from_value(v, "$.target", base)?),
        (None, None) => return Err(field("$.target", "missing (and no target scenario given)")),
    };
    let pre = match obj.get("pre") {
        Some(v) => pre_from_value(v, &target, base)?,
        None => PreProcessing::identity(&target),
    };
    let post = match obj.get("post") {
        Some(v) => post_from_value(v, &target, pre.scenario(), base)?,
        None => PostProcessing::identity(&target),
    };
    Ok(NcWiring { target, pre, post })
}

pub fn wiring_to_string(w: &NcWiring) -> String {
    pretty(&wiring_to_value(w))
}

pub fn load_wiring(path: &Path, target: Option<&Arc<Scenario>>) -> Result<NcWiring, IoError> {
    parse_wiring(&read(path)?, &base_of(path), target)
}

pub fn store_wiring(path: &Path, w: &NcWiring) -> Result<(), IoError> {
    write(path, &wiring_to_string(w))
}

// ---------------------------------------------------------------- reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Report {
    Preservation(PreservationReport),
    Monotonicity(MonotonicityReport),
}

pub fn report_to_string(r: &Report) -> String {
    pretty(&serde_json::to_value(r).expect("reports serialize"))
}

pub fn parse_report(text: &str) -> Result<Report, IoError> {
    serde_json::from_value(parse_json(text)?).map_err(|e| field("$", e.to_string()))
}

pub fn load_report(path: &Path) -> Result<Report, IoError> {
    parse_report(&read(path)?)
}

pub fn store_report(path: &Path, r: &Report) -> Result<(), IoError> {
    write(path, &report_to_string(r))
}

// ---------------------------------------------------------------- results

fn quant_value(v: &QuantValue) -> Value {
    match v {
        QuantValue::Exact(r) => Value::String(format_rational(r)),
        QuantValue::Approx(x) => json!(x),
    }
}

pub fn quantifier_result_to_value(r: &QuantifierResult, scenario: &Scenario) -> Value {
    let witness = r.witness.as_ref().map(|w| match w {
        Witness::Exact(model) => Value::Array(
            model
                .weights
                .iter()
                .map(|(g, p)| json!({ "assignment": g.labels(scenario), "weight": format_rational(p) }))
                .collect(),
        ),
        Witness::Approx(model) => Value::Array(
            model.weights.iter().map(|(g, p)| json!({ "assignment": g.labels(scenario), "weight": p })).collect(),
        ),
    });
    let mut out = json!({
        "measure": r.measure.name(),
        "value": quant_value(&r.value),
        "valueFloat": r.value.to_f64(),
        "iterations": r.meta.iterations,
        "mode": r.meta.mode,
    });
    let obj = out.as_object_mut().expect("object");
    if let Some(g) = r.meta.gap {
        obj.insert("gap".into(), json!(g));
    }
    if let Some(l) = r.meta.lower_bound {
        obj.insert("lowerBound".into(), json!(l));
    }
    if let Some(w) = witness {
        obj.insert("witness".into(), w);
    }
    if let Some(d) = &r.decomposition {
        obj.insert(
            "decomposition".into(),
            json!({
                "lambda": format_rational(&d.lambda),
                "ncPart": d.nc_part.as_ref().map(tables_to_value),
                "residual": d.residual.as_ref().map(tables_to_value),
            }),
        );
    }
    out
}

impl From<ScenarioError> for IoError {
    fn from(e: ScenarioError) -> Self {
        invariant(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::catalog as boxes;
    use crate::rational::ratio;
    use crate::scenario::catalog;
    use crate::wirings::{run_preservation_suite, sample_random_ncwiring, SampleParams};

    #[test]
    fn scenario_round_trip() {
        let s = catalog::chain();
        assert_eq!(parse_scenario(&scenario_to_string(&s)).unwrap(), s);
    }

    #[test]
    fn behavior_round_trip_keeps_thirds() {
        let s = Arc::new(catalog::chain());
        let t = vec![ratio(1, 3), ratio(0, 1), ratio(1, 3), ratio(1, 3)];
        let u = vec![ratio(1, 3), ratio(1, 3), ratio(0, 1), ratio(1, 3)];
        let b = Behavior::new(s, vec![t, u]).unwrap();
        let text = behavior_to_string(&b);
        assert!(text.contains("\"1/3\""));
        assert_eq!(parse_behavior(&text, Path::new("")).unwrap(), b);
        let pr = boxes::pr_box();
        assert_eq!(parse_behavior(&behavior_to_string(&pr), Path::new("")).unwrap(), pr);
    }

    #[test]
    fn normalization_error_is_named() {
        let text = r#"{"scenario": {"measurements": ["x","y","z"], "outcomes": ["0","1"], "contexts": [["x","y"],["y","z"]]},
            "tables": {"0": {"0,0": "0.9"}, "1": {"0,0": 1}}}"#;
        match parse_behavior(text, Path::new("")) {
            Err(IoError::Invariant { invariant, .. }) => assert_eq!(invariant, "normalization"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_field_errors_carry_locations() {
        match parse_scenario("{\n  \"measurements\": [\"x\",\n}") {
            Err(IoError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = r#"{"scenario": {"measurements": ["x","y"], "outcomes": ["0","1"], "contexts": [["x","y"]]},
            "tables": {"0": {"0,2": "1"}}}"#;
        match parse_behavior(text, Path::new("")) {
            Err(IoError::Field { field, message }) => {
                assert_eq!(field, "$.tables.\"0\".\"0,2\"");
                assert!(message.contains("unknown outcome"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wiring_round_trip() {
        let s = Arc::new(catalog::chsh());
        let w = sample_random_ncwiring(&s, 11, SampleParams::default()).unwrap();
        let text = wiring_to_string(&w);
        assert_eq!(parse_wiring(&text, Path::new(""), None).unwrap(), w);
        assert_eq!(parse_wiring(&text, Path::new(""), Some(&s)).unwrap(), w);
    }

    #[test]
    fn missing_sections_mean_identity() {
        let s = Arc::new(catalog::chain());
        let w = parse_wiring("{}", Path::new(""), Some(&s)).unwrap();
        assert_eq!(w, NcWiring::identity(&s));
    }

    #[test]
    fn report_round_trip() {
        let s = Arc::new(catalog::chain());
        let r = Report::Preservation(run_preservation_suite(&s, 3, 1).unwrap());
        assert_eq!(parse_report(&report_to_string(&r)).unwrap(), r);
    }
}
