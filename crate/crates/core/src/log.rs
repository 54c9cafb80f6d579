//! Concrete system logs: schemas, observations, ingestion, downsampling and
//! train/test splitting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("log contains no observations")]
    EmptyLog,
    #[error("split boundary leaves an empty side")]
    DegenerateSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    Numeric,
    /// Actuator-style columns with a small integer range. They are carried
    /// as numeric values so refinement predicates may range over them.
    Discrete,
}

/// Names and kinds of the logged variables, plus the sampling period.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSchema {
    variables: Vec<(String, VariableKind)>,
    timestamp_column: Option<String>,
    sample_period: f64,
}

impl ObservationSchema {
    pub fn new(
        variables: Vec<(String, VariableKind)>,
        timestamp_column: Option<String>,
        sample_period: f64,
    ) -> Result<Self, LogError> {
        if variables.is_empty() {
            return Err(LogError::InvalidSchema("no variables declared".into()));
        }
        for (i, (name, _)) in variables.iter().enumerate() {
            if name.is_empty() {
                return Err(LogError::InvalidSchema("empty variable name".into()));
            }
            if variables[..i].iter().any(|(n, _)| n == name) {
                return Err(LogError::InvalidSchema(format!(
                    "duplicate variable `{name}`"
                )));
            }
        }
        if !variables
            .iter()
            .any(|(_, k)| matches!(k, VariableKind::Numeric))
        {
            return Err(LogError::InvalidSchema(
                "at least one numeric variable required".into(),
            ));
        }
        if sample_period <= 0.0 || !sample_period.is_finite() {
            return Err(LogError::InvalidSchema(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        Ok(Self {
            variables,
            timestamp_column,
            sample_period,
        })
    }

    pub fn arity(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[(String, VariableKind)] {
        &self.variables
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|(n, _)| n.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|(n, _)| n == name)
    }

    pub fn timestamp_column(&self) -> Option<&str> {
        self.timestamp_column.as_deref()
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    fn with_period(&self, period: f64) -> Self {
        Self {
            variables: self.variables.clone(),
            timestamp_column: self.timestamp_column.clone(),
            sample_period: period,
        }
    }
}

/// One row of the log: the valuation of all schema variables at a time
/// point. Timestamps are seconds relative to the start of the log.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub timestamp: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemLog {
    schema: ObservationSchema,
    observations: Vec<Observation>,
}

impl SystemLog {
    /// Builds a log from pre-assembled observations, enforcing the type
    /// invariants (non-empty, matching arity, finite values, strictly
    /// increasing timestamps).
    pub fn new(
        schema: ObservationSchema,
        observations: Vec<Observation>,
    ) -> Result<Self, LogError> {
        if observations.is_empty() {
            return Err(LogError::EmptyLog);
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.values.len() != schema.arity() {
                return Err(LogError::MalformedRow {
                    line: i + 1,
                    reason: format!(
                        "expected {} values, got {}",
                        schema.arity(),
                        obs.values.len()
                    ),
                });
            }
            if !obs.values.iter().all(|v| v.is_finite()) || !obs.timestamp.is_finite() {
                return Err(LogError::MalformedRow {
                    line: i + 1,
                    reason: "non-finite value".into(),
                });
            }
            if i > 0 && obs.timestamp <= observations[i - 1].timestamp {
                return Err(LogError::MalformedRow {
                    line: i + 1,
                    reason: "timestamps not strictly increasing".into(),
                });
            }
        }
        Ok(Self {
            schema,
            observations,
        })
    }

    pub fn schema(&self) -> &ObservationSchema {
        &self.schema
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Duration covered by the log: last timestamp minus first.
    pub fn duration(&self) -> f64 {
        self.observations.last().unwrap().timestamp - self.observations[0].timestamp
    }
}

/// Parses a delimited table (comma or tab, autodetected from the header
/// line) into a [`SystemLog`].
///
/// Extra columns are ignored. When the schema declares no timestamp column,
/// timestamps are synthesized as row index times the sample period. A
/// declared timestamp column must hold numeric seconds; values are shifted
/// so the first observation is at zero.
pub fn parse_log(text: &str, schema: &ObservationSchema) -> Result<SystemLog, LogError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(LogError::EmptyLog)?;
    let delimiter = if header.contains('\t') { '\t' } else { ',' };
    let columns: Vec<&str> = header.split(delimiter).map(str::trim).collect();

    let mut var_cols = Vec::with_capacity(schema.arity());
    for (name, _) in schema.variables() {
        let idx = columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LogError::MissingColumn(name.clone()))?;
        var_cols.push(idx);
    }
    let ts_col = match schema.timestamp_column() {
        Some(name) => Some(
            columns
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| LogError::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };

    let mut observations = Vec::new();
    let mut first_ts = None;
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = line_idx + 1;
        let cells: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(LogError::MalformedRow {
                line: line_no,
                reason: format!("expected {} cells, got {}", columns.len(), cells.len()),
            });
        }
        let parse_cell = |col: usize| -> Result<f64, LogError> {
            let cell = cells[col];
            let value: f64 = cell.parse().map_err(|_| LogError::MalformedRow {
                line: line_no,
                reason: format!("non-numeric cell `{cell}` in column `{}`", columns[col]),
            })?;
            if !value.is_finite() {
                return Err(LogError::MalformedRow {
                    line: line_no,
                    reason: format!("non-finite cell in column `{}`", columns[col]),
                });
            }
            Ok(value)
        };

        let mut values = Vec::with_capacity(var_cols.len());
        for &col in &var_cols {
            values.push(parse_cell(col)?);
        }
        let timestamp = match ts_col {
            Some(col) => {
                let raw = parse_cell(col)?;
                let base = *first_ts.get_or_insert(raw);
                raw - base
            }
            None => observations.len() as f64 * schema.sample_period(),
        };
        if let Some(prev) = observations.last().map(|o: &Observation| o.timestamp) {
            if timestamp <= prev {
                return Err(LogError::MalformedRow {
                    line: line_no,
                    reason: "timestamps not strictly increasing".into(),
                });
            }
        }
        observations.push(Observation { timestamp, values });
    }

    if observations.is_empty() {
        return Err(LogError::EmptyLog);
    }
    Ok(SystemLog {
        schema: schema.clone(),
        observations,
    })
}

/// Keeps observations at indices `0, stride, 2*stride, ...` and multiplies
/// the schema sample period by the stride.
pub fn downsample(log: &SystemLog, stride: usize) -> SystemLog {
    assert!(stride >= 1, "stride must be at least 1");
    let observations: Vec<Observation> = log.observations.iter().step_by(stride).cloned().collect();
    SystemLog {
        schema: log
            .schema
            .with_period(log.schema.sample_period() * stride as f64),
        observations,
    }
}

/// Splits a log into a prefix of `ceil(boundary * len)` observations and
/// the remaining suffix. Concatenating the two sides reproduces the input.
pub fn split(log: &SystemLog, boundary: f64) -> Result<(SystemLog, SystemLog), LogError> {
    let n = log.len();
    let cut_raw = libm::ceil(boundary * n as f64);
    if cut_raw.is_nan() || cut_raw < 1.0 || cut_raw >= n as f64 {
        return Err(LogError::DegenerateSplit);
    }
    let cut = cut_raw as usize;
    let prefix = SystemLog {
        schema: log.schema.clone(),
        observations: log.observations[..cut].to_vec(),
    };
    let suffix = SystemLog {
        schema: log.schema.clone(),
        observations: log.observations[cut..].to_vec(),
    };
    Ok((prefix, suffix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn schema(names: &[&str]) -> ObservationSchema {
        ObservationSchema::new(
            names
                .iter()
                .map(|n| (n.to_string(), VariableKind::Numeric))
                .collect(),
            None,
            1.0,
        )
        .unwrap()
    }

    /// The truncated two-pump log used throughout the docs: seven rows of
    /// sensor readings, one record per second.
    const SEVEN_ROWS: &str = "\
FIT101,LIT101,MV101,P101,P102,AIT201,AIT202,AIT203,FIT201
2.470294,261.5804,2,2,1,244.3284,8.19008,306.101,2.471278
2.457163,261.1879,2,2,1,244.3284,8.19008,306.101,2.468587
2.439548,260.9131,2,2,1,244.3284,8.19008,306.101,2.467305
2.428338,260.285,2,2,1,244.3284,8.19008,306.101,2.466536
2.424815,259.8925,2,2,1,244.4245,8.19008,306.101,2.466536
2.425456,260.0495,2,2,1,244.5847,8.19008,306.101,2.465127
2.472857,260.2065,2,2,1,244.5847,8.19008,306.101,2.464742
";

    fn seven_row_schema() -> ObservationSchema {
        ObservationSchema::new(
            [
                ("FIT101", VariableKind::Numeric),
                ("LIT101", VariableKind::Numeric),
                ("MV101", VariableKind::Discrete),
                ("P101", VariableKind::Discrete),
                ("P102", VariableKind::Discrete),
                ("AIT201", VariableKind::Numeric),
                ("AIT202", VariableKind::Numeric),
                ("AIT203", VariableKind::Numeric),
                ("FIT201", VariableKind::Numeric),
            ]
            .into_iter()
            .map(|(n, k)| (n.to_string(), k))
            .collect(),
            None,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn parses_seven_row_table() {
        let log = parse_log(SEVEN_ROWS, &seven_row_schema()).unwrap();
        assert_eq!(log.len(), 7);
        assert_eq!(log.observations()[0].values[0], 2.470294);
        assert_eq!(log.observations()[0].timestamp, 0.0);
        assert_eq!(log.observations()[6].timestamp, 6.0);
        assert_eq!(log.duration(), 6.0);
    }

    #[test]
    fn parses_subset_of_columns_ignoring_extras() {
        let sub = schema(&["LIT101", "FIT201"]);
        let log = parse_log(SEVEN_ROWS, &sub).unwrap();
        assert_eq!(log.observations()[0].values, vec![261.5804, 2.471278]);
    }

    #[test]
    fn header_only_file_is_empty_log() {
        let err = parse_log("FIT101,LIT101\n", &schema(&["FIT101"])).unwrap_err();
        assert_eq!(err, LogError::EmptyLog);
    }

    #[test]
    fn non_numeric_cell_reports_line_number() {
        let text = "x,y\n1.0,2.0\n1.5,oops\n2.0,3.0\n";
        let err = parse_log(text, &schema(&["x", "y"])).unwrap_err();
        match err {
            LogError::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_reports_line_number() {
        let text = "x,y\n1.0,2.0\n3.0\n";
        let err = parse_log(text, &schema(&["x", "y"])).unwrap_err();
        match err {
            LogError::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let err = parse_log("a,b\n1,2\n", &schema(&["c"])).unwrap_err();
        assert_eq!(err, LogError::MissingColumn("c".into()));
    }

    #[test]
    fn tab_delimiter_is_autodetected() {
        let text = "x\ty\n1.0\t2.0\n2.5\t3.5\n";
        let log = parse_log(text, &schema(&["y"])).unwrap();
        assert_eq!(log.observations()[1].values, vec![3.5]);
    }

    #[test]
    fn declared_timestamp_column_is_rebased_to_zero() {
        let sch = ObservationSchema::new(
            vec![("x".to_string(), VariableKind::Numeric)],
            Some("t".to_string()),
            1.0,
        )
        .unwrap();
        let log = parse_log("t,x\n100.0,1.0\n101.5,2.0\n104.0,3.0\n", &sch).unwrap();
        let ts: Vec<f64> = log.observations().iter().map(|o| o.timestamp).collect();
        assert_eq!(ts, vec![0.0, 1.5, 4.0]);
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        let sch = ObservationSchema::new(
            vec![("x".to_string(), VariableKind::Numeric)],
            Some("t".to_string()),
            1.0,
        )
        .unwrap();
        let err = parse_log("t,x\n5.0,1.0\n5.0,2.0\n", &sch).unwrap_err();
        assert!(matches!(err, LogError::MalformedRow { line: 3, .. }));
    }

    fn make_log(n: usize) -> SystemLog {
        let sch = schema(&["x"]);
        SystemLog::new(
            sch,
            (0..n)
                .map(|i| Observation {
                    timestamp: i as f64,
                    values: vec![i as f64 * 0.5],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn downsample_counts_match_per_minute_rule() {
        // 288000 one-second rows at stride 60 leave one row per minute.
        let log = make_log(288_000);
        let down = downsample(&log, 60);
        assert_eq!(down.len(), 4800);
        assert_eq!(down.schema().sample_period(), 60.0);
    }

    #[test]
    fn downsample_stride_one_is_identity() {
        let log = make_log(7);
        assert_eq!(downsample(&log, 1), log);
    }

    #[test]
    fn downsample_keeps_every_third_row() {
        let log = make_log(7);
        let down = downsample(&log, 3);
        let kept: Vec<f64> = down.observations().iter().map(|o| o.timestamp).collect();
        assert_eq!(kept, vec![0.0, 3.0, 6.0]);
    }

    #[test]
    fn split_four_sevenths() {
        let log = make_log(7);
        let (train, test) = split(&log, 4.0 / 7.0).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 3);
    }

    #[test]
    fn split_half() {
        let log = make_log(10);
        let (a, b) = split(&log, 0.5).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
    }

    #[test]
    fn split_degenerate() {
        // ceil(0.99 * 2) = 2 leaves an empty suffix.
        let log = make_log(2);
        assert_eq!(split(&log, 0.99).unwrap_err(), LogError::DegenerateSplit);
        assert_eq!(split(&log, 0.0).unwrap_err(), LogError::DegenerateSplit);
        assert_eq!(split(&log, 1.0).unwrap_err(), LogError::DegenerateSplit);
    }

    proptest! {
        #[test]
        fn split_then_concat_is_identity(n in 2usize..200, frac in 0.01f64..0.99) {
            let log = make_log(n);
            if let Ok((a, b)) = split(&log, frac) {
                let mut rejoined = a.observations().to_vec();
                rejoined.extend_from_slice(b.observations());
                prop_assert_eq!(rejoined, log.observations().to_vec());
            }
        }

        #[test]
        fn downsample_composes(n in 1usize..400, a in 1usize..6, b in 1usize..6) {
            let log = make_log(n);
            let two_step = downsample(&downsample(&log, a), b);
            let one_step = downsample(&log, a * b);
            prop_assert_eq!(two_step.observations(), one_step.observations());
            prop_assert_eq!(two_step.schema().sample_period(),
                            one_step.schema().sample_period());
        }

        #[test]
        fn parse_accepts_every_row_in_order(rows in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
            let mut text = alloc::string::String::from("x\n");
            for r in &rows {
                text.push_str(&format!("{r}\n"));
            }
            let log = parse_log(&text, &schema(&["x"])).unwrap();
            let parsed: Vec<f64> = log.observations().iter().map(|o| o.values[0]).collect();
            prop_assert_eq!(parsed, rows);
        }
    }
}
