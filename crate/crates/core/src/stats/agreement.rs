use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    bland_altman, bootstrap_mean_diff_ci, classify_icc, icc, percentage_error, BlandAltman, BootstrapCi, IccClass,
    IccForm, MeasurementTable, RowLabel, StatsError,
};

/// One measured value in the long matched-walk format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedRecord {
    pub walk_id: String,
    pub subject_id: String,
    pub method: String,
    pub parameter: String,
    /// Empty or non-finite cells count as not measured.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        AgreementConfig {
            resamples: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Comparison of one method against the reference for one parameter.
/// Differences are reference minus method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterAgreement {
    pub parameter: String,
    pub unit: String,
    pub method: String,
    pub n: usize,
    /// Walks measured by only one of the two methods.
    pub excluded: usize,
    pub reference_mean: f64,
    pub reference_sd: f64,
    pub method_mean: f64,
    pub method_sd: f64,
    pub icc_2k: f64,
    pub icc_21: f64,
    pub icc_31: f64,
    pub class: IccClass,
    pub mean_diff: BootstrapCi,
    /// Mean difference and its interval in percent of the reference mean.
    pub mean_diff_pct: [f64; 3],
    pub bland_altman: BlandAltman,
    pub percentage_error: f64,
    /// Matched `[reference, method]` values, one per walk.
    pub pairs: Vec<[f64; 2]>,
}

/// Test-retest agreement of one method with itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repeatability {
    pub method: String,
    pub parameter: String,
    pub icc_31: f64,
    pub subjects: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedComparison {
    pub parameter: String,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub reference: String,
    pub methods: Vec<String>,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub parameters: Vec<ParameterAgreement>,
    pub repeatability: Vec<Repeatability>,
    pub skipped: Vec<SkippedComparison>,
}

const KNOWN: [(&str, &str); 4] = [
    ("gait_speed", "m/s"),
    ("cadence", "steps/min"),
    ("step_length", "cm"),
    ("step_time", "s"),
];

fn unit_of(parameter: &str) -> &'static str {
    KNOWN.iter().find(|(p, _)| *p == parameter).map_or("", |(_, u)| u)
}

pub fn read_matched_csv<R: Read>(reader: R) -> Result<Vec<MatchedRecord>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(StatsError::from))
        .collect()
}

pub fn write_matched_csv<W: Write>(writer: W, records: &[MatchedRecord]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| StatsError::Csv(e.to_string()))
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Value per walk for one (method, parameter), in input order of walks.
struct Index<'a> {
    walks: Vec<(&'a str, &'a str)>,
    cells: HashMap<(&'a str, &'a str, &'a str), Option<f64>>,
}

impl<'a> Index<'a> {
    fn build(records: &'a [MatchedRecord]) -> Result<Self, StatsError> {
        let mut walks = Vec::new();
        let mut seen = HashMap::new();
        let mut cells = HashMap::new();
        for r in records {
            if seen.insert(r.walk_id.as_str(), ()).is_none() {
                walks.push((r.walk_id.as_str(), r.subject_id.as_str()));
            }
            let value = r.value.filter(|v| v.is_finite());
            let key = (r.walk_id.as_str(), r.method.as_str(), r.parameter.as_str());
            if cells.insert(key, value).is_some() {
                return Err(StatsError::DuplicateRecord {
                    walk: r.walk_id.clone(),
                    method: r.method.clone(),
                    parameter: r.parameter.clone(),
                });
            }
        }
        Ok(Index { walks, cells })
    }

    fn get(&self, walk: &str, method: &str, parameter: &str) -> Option<f64> {
        self.cells.get(&(walk, method, parameter)).copied().flatten()
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    (super::bland_altman::mean(x), super::bland_altman::sample_sd(x))
}

fn compare(
    index: &Index,
    parameter: &str,
    reference: &str,
    method: &str,
    cfg: &AgreementConfig,
) -> Result<ParameterAgreement, StatsError> {
    let rows: Vec<(RowLabel, Vec<Option<f64>>)> = index
        .walks
        .iter()
        .filter_map(|&(walk, subject)| {
            let cells = vec![index.get(walk, reference, parameter), index.get(walk, method, parameter)];
            cells.iter().any(Option::is_some).then(|| {
                (
                    RowLabel {
                        subject: subject.to_string(),
                        walk: walk.to_string(),
                    },
                    cells,
                )
            })
        })
        .collect();
    let unit = unit_of(parameter);
    let complete = rows.iter().filter(|(_, c)| c.iter().all(Option::is_some)).count();
    if complete < 2 {
        return Err(StatsError::TooFewPairs(complete));
    }
    let (table, excluded) =
        MeasurementTable::from_rows_with_gaps(parameter, unit, vec![reference.into(), method.into()], rows)?;
    let a = table.column(0);
    let b = table.column(1);
    let icc_2k = icc(&table, IccForm::RandomK)?;
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let ba = bland_altman(&a, &b)?;
    let ci = bootstrap_mean_diff_ci(&d, cfg.resamples, cfg.level, cfg.seed)?;
    let pct = |v: f64| 100.0 * v / ba.reference_mean;
    let (reference_mean, reference_sd) = mean_sd(&a);
    let (method_mean, method_sd) = mean_sd(&b);
    Ok(ParameterAgreement {
        parameter: parameter.to_string(),
        unit: unit.to_string(),
        method: method.to_string(),
        n: table.rows(),
        excluded,
        reference_mean,
        reference_sd,
        method_mean,
        method_sd,
        icc_2k,
        icc_21: icc(&table, IccForm::Random1)?,
        icc_31: icc(&table, IccForm::Mixed1)?,
        class: classify_icc(icc_2k),
        mean_diff_pct: [pct(ci.mean), pct(ci.lower), pct(ci.upper)],
        mean_diff: ci,
        bland_altman: ba,
        percentage_error: percentage_error(&a, &b)?,
        pairs: a.iter().zip(&b).map(|(x, y)| [*x, *y]).collect(),
    })
}

/// Repeated walks of each subject form the trials; subjects with fewer
/// walks than the smallest usable count are left out.
fn method_repeatability(index: &Index, method: &str, parameter: &str) -> Option<Repeatability> {
    let mut by_subject: Vec<(&str, Vec<f64>)> = Vec::new();
    for &(walk, subject) in &index.walks {
        if let Some(v) = index.get(walk, method, parameter) {
            match by_subject.iter_mut().find(|(s, _)| *s == subject) {
                Some((_, vals)) => vals.push(v),
                None => by_subject.push((subject, vec![v])),
            }
        }
    }
    let usable: Vec<&Vec<f64>> = by_subject.iter().map(|(_, v)| v).filter(|v| v.len() >= 2).collect();
    let trials = usable.iter().map(|v| v.len()).min()?;
    let values: Vec<Vec<f64>> = usable.iter().map(|v| v[..trials].to_vec()).collect();
    let table = MeasurementTable::from_values(values).ok()?;
    let value = icc(&table, IccForm::Mixed1).ok()?;
    Some(Repeatability {
        method: method.to_string(),
        parameter: parameter.to_string(),
        icc_31: value,
        subjects: table.rows(),
        trials,
    })
}

/// Compares every method with `reference` on every parameter present.
pub fn agreement(
    records: &[MatchedRecord],
    reference: &str,
    cfg: &AgreementConfig,
) -> Result<AgreementReport, StatsError> {
    if cfg.resamples < super::MIN_RESAMPLES {
        return Err(StatsError::TooFewResamples(cfg.resamples));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(StatsError::InvalidLevel(cfg.level));
    }
    let methods = first_appearance(records.iter().map(|r| r.method.as_str()));
    if !methods.iter().any(|m| m == reference) {
        return Err(StatsError::UnknownMethod {
            name: reference.to_string(),
            available: methods.join(", "),
        });
    }
    let mut parameters = first_appearance(records.iter().map(|r| r.parameter.as_str()));
    parameters.sort_by_key(|p| KNOWN.iter().position(|(k, _)| k == p).unwrap_or(KNOWN.len()));
    let index = Index::build(records)?;

    let mut report = AgreementReport {
        reference: reference.to_string(),
        methods: methods.clone(),
        resamples: cfg.resamples,
        level: cfg.level,
        seed: cfg.seed,
        parameters: Vec::new(),
        repeatability: Vec::new(),
        skipped: Vec::new(),
    };
    for parameter in &parameters {
        for method in methods.iter().filter(|m| *m != reference) {
            match compare(&index, parameter, reference, method, cfg) {
                Ok(p) => report.parameters.push(p),
                Err(e) => report.skipped.push(SkippedComparison {
                    parameter: parameter.clone(),
                    method: method.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        for method in &methods {
            report.repeatability.extend(method_repeatability(&index, method, parameter));
        }
    }
    if report.parameters.is_empty() {
        return Err(StatsError::NoUsableParameters);
    }
    Ok(report)
}

impl AgreementReport {
    pub fn repeatability_of(&self, method: &str, parameter: &str) -> Option<f64> {
        self.repeatability
            .iter()
            .find(|r| r.method == method && r.parameter == parameter)
            .map(|r| r.icc_31)
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or(String::new(), |v| format!("{v:.digits$}"))
}

/// One row per parameter and method: the reference row carries its mean
/// and repeatability, method rows add agreement with the reference.
pub fn write_table_csv<W: Write>(writer: W, report: &AgreementReport) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "parameter",
        "unit",
        "method",
        "n",
        "mean_sd",
        "icc_2k",
        "icc_31",
        "diff_pct_ci",
        "loa_pct",
        "percentage_error",
    ])?;
    let mut parameters: Vec<&str> = Vec::new();
    for p in &report.parameters {
        if !parameters.contains(&p.parameter.as_str()) {
            parameters.push(&p.parameter);
        }
    }
    for parameter in parameters {
        let rows: Vec<&ParameterAgreement> = report.parameters.iter().filter(|p| p.parameter == parameter).collect();
        let first = rows[0];
        w.write_record([
            parameter,
            &first.unit,
            &report.reference,
            &first.n.to_string(),
            &format!("{:.3} ({:.3})", first.reference_mean, first.reference_sd),
            "",
            &fmt_opt(report.repeatability_of(&report.reference, parameter), 3),
            "",
            "",
            "",
        ])?;
        for p in rows {
            let [m, lo, hi] = p.mean_diff_pct;
            w.write_record([
                parameter,
                &p.unit,
                &p.method,
                &p.n.to_string(),
                &format!("{:.3} ({:.3})", p.method_mean, p.method_sd),
                &format!("{:.3}", p.icc_2k),
                &fmt_opt(report.repeatability_of(&p.method, parameter), 3),
                &format!("{m:.2} [{lo:.2}, {hi:.2}]"),
                &format!(
                    "[{:.2}, {:.2}]",
                    p.bland_altman.loa_lower_pct, p.bland_altman.loa_upper_pct
                ),
                &format!("{:.2}", p.percentage_error),
            ])?;
        }
    }
    w.flush().map_err(|e| StatsError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rec(walk: &str, subject: &str, method: &str, parameter: &str, value: Option<f64>) -> MatchedRecord {
        MatchedRecord {
            walk_id: walk.into(),
            subject_id: subject.into(),
            method: method.into(),
            parameter: parameter.into(),
            value,
        }
    }

    fn cfg() -> AgreementConfig {
        AgreementConfig {
            resamples: 1000,
            level: 0.95,
            seed: 7,
        }
    }

    fn paired(offset: f64) -> Vec<MatchedRecord> {
        let mut out = Vec::new();
        for i in 0..8 {
            let walk = format!("w{i}");
            let subject = format!("s{}", i / 2);
            let v = 1.0 + 0.1 * i as f64 + if i % 3 == 0 { 0.02 } else { 0.0 };
            out.push(rec(&walk, &subject, "ref", "gait_speed", Some(v)));
            out.push(rec(&walk, &subject, "app", "gait_speed", Some(v + offset)));
        }
        out
    }

    #[test]
    fn identical_methods_agree_perfectly() {
        let report = agreement(&paired(0.0), "ref", &cfg()).unwrap();
        let p = &report.parameters[0];
        assert_eq!((p.method.as_str(), p.n, p.excluded), ("app", 8, 0));
        assert_abs_diff_eq!(p.icc_2k, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.icc_21, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.icc_31, 1.0, epsilon = 1e-9);
        assert_eq!((p.bland_altman.bias, p.bland_altman.loa_lower, p.bland_altman.loa_upper), (0.0, 0.0, 0.0));
        assert_eq!(p.unit, "m/s");
    }

    #[test]
    fn constant_offset_shows_as_bias() {
        let report = agreement(&paired(0.05), "ref", &cfg()).unwrap();
        let p = &report.parameters[0];
        assert_abs_diff_eq!(p.bland_altman.bias, -0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mean_diff.lower, -0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mean_diff_pct[0], -100.0 * 0.05 / p.reference_mean, epsilon = 1e-9);
        assert_abs_diff_eq!(p.icc_31, 1.0, epsilon = 1e-9);
        assert!(p.icc_2k < 1.0);
    }

    #[test]
    fn missing_cells_are_excluded_and_counted() {
        let mut records = paired(0.0);
        records[3].value = None;
        records[6].value = Some(f64::NAN);
        let report = agreement(&records, "ref", &cfg()).unwrap();
        assert_eq!((report.parameters[0].n, report.parameters[0].excluded), (6, 2));
    }

    #[test]
    fn repeatability_uses_walks_of_each_subject() {
        let report = agreement(&paired(0.0), "ref", &cfg()).unwrap();
        let r = report.repeatability.iter().find(|r| r.method == "ref").unwrap();
        assert_eq!((r.subjects, r.trials), (4, 2));
        let table = MeasurementTable::from_values(vec![
            vec![1.02, 1.1],
            vec![1.2, 1.32],
            vec![1.4, 1.5],
            vec![1.62, 1.7],
        ])
        .unwrap();
        assert_abs_diff_eq!(r.icc_31, icc(&table, IccForm::Mixed1).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn unknown_reference_and_unusable_data() {
        assert!(matches!(
            agreement(&paired(0.0), "gold", &cfg()),
            Err(StatsError::UnknownMethod { .. })
        ));
        let records = vec![
            rec("w0", "s0", "ref", "cadence", Some(100.0)),
            rec("w0", "s0", "app", "cadence", Some(101.0)),
        ];
        assert_eq!(agreement(&records, "ref", &cfg()), Err(StatsError::NoUsableParameters));
    }

    #[test]
    fn duplicate_records_are_rejected() {
        let mut records = paired(0.0);
        records.push(records[0].clone());
        assert!(matches!(
            agreement(&records, "ref", &cfg()),
            Err(StatsError::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn csv_round_trip_and_table_layout() {
        let records = paired(0.01);
        let mut buf = Vec::new();
        write_matched_csv(&mut buf, &records).unwrap();
        assert_eq!(read_matched_csv(buf.as_slice()).unwrap(), records);
        let blank = "walk_id,subject_id,method,parameter,value\nw1,s1,ref,cadence,\n";
        assert_eq!(read_matched_csv(blank.as_bytes()).unwrap()[0].value, None);

        let report = agreement(&records, "ref", &cfg()).unwrap();
        let mut out = Vec::new();
        write_table_csv(&mut out, &report).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("parameter,unit,method,n,mean_sd,icc_2k,icc_31,diff_pct_ci"));
        assert!(lines[1].starts_with("gait_speed,m/s,ref,8,"));
        assert!(lines[2].starts_with("gait_speed,m/s,app,8,"));
    }
}
