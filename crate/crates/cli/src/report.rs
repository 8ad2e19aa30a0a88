//! Report rows and their CSV / JSON encodings.

use std::io::Write;

use serde::ser::Serializer;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    #[serde(serialize_with = "json_number")]
    pub value: Option<f64>,
    pub eq_tag: &'static str,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub extra: Value,
}

/// Non-finite values become strings so the JSON stays valid.
fn json_number<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) => s.serialize_str(&format_value(*x)),
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Row context shared by consecutive rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ctx {
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        let ctx = Ctx {
            d: config.system.as_ref().map(|s| s.d),
            n: config.system.as_ref().map(|s| s.n),
            seed: config.run.seed,
        };
        let mut r = Self::default();
        r.push(
            ctx,
            "config_echo",
            None,
            "config",
            serde_json::to_value(config).expect("config serializes"),
        );
        r
    }

    pub fn push(
        &mut self,
        ctx: Ctx,
        quantity: impl Into<String>,
        value: Option<f64>,
        eq_tag: &'static str,
        extra: Value,
    ) {
        self.rows.push(ReportRow {
            quantity: quantity.into(),
            value,
            eq_tag,
            d: ctx.d,
            n: ctx.n,
            seed: ctx.seed,
            extra,
        });
    }

    pub fn value(
        &mut self,
        ctx: Ctx,
        quantity: impl Into<String>,
        value: f64,
        eq_tag: &'static str,
        extra: Value,
    ) {
        self.push(ctx, quantity, Some(value), eq_tag, extra);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CliError::Output(e.to_string());
        out.write_record(["quantity", "value", "eq_tag", "d", "n", "seed", "extra"])
            .map_err(err)?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.quantity.clone(),
                opt(r.value.map(format_value)),
                r.eq_tag.to_string(),
                opt(r.d.map(|x| x.to_string())),
                opt(r.n.map(|x| x.to_string())),
                opt(r.seed.map(|x| x.to_string())),
                r.extra.to_string(),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| CliError::Output(e.to_string()))
    }

    pub fn write_json<W: Write>(
        &self,
        config: &ExperimentConfig,
        mut w: W,
    ) -> Result<(), CliError> {
        let doc = json!({ "config": config, "rows": self.rows });
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Output(e.to_string()))?;
        writeln!(w).map_err(|e| CliError::Output(e.to_string()))
    }

    pub fn write<W: Write>(
        &self,
        config: &ExperimentConfig,
        format: Format,
        w: W,
    ) -> Result<(), CliError> {
        match format {
            Format::Csv => self.write_csv(w),
            Format::Json => self.write_json(config, w),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip_through_text() {
        for x in [
            0.1,
            1.0 / 3.0,
            std::f64::consts::PI * 1e-300,
            4.0 / 35.0,
            f64::MAX,
            -2.5e-17,
        ] {
            let back: f64 = format_value(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
        assert_eq!(format_value(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_layout() {
        let config = ExperimentConfig::from_json("{}").unwrap();
        let mut r = Report::new(&config);
        r.value(Ctx::default(), "x", 0.25, "phi", json!({"a": 1}));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "quantity,value,eq_tag,d,n,seed,extra"
        );
        assert!(lines.next().unwrap().starts_with("config_echo,,config,"));
        assert_eq!(
            lines.next().unwrap(),
            "x,2.5000000000000000e-1,phi,,,,\"{\"\"a\"\":1}\""
        );
    }
}
