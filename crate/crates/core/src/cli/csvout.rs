use std::path::Path;

use crate::sim::Trajectory;

/// Column-named numeric table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, table: &Table) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&v| format_float(v)))?;
    }
    w.flush()
}

pub fn read_csv(path: &Path) -> Result<Table, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// `t, q_1..q_n, [qdot_1..qdot_n], V, err, moderr, norm_q, acc_l2, [acc_dissipation]`;
/// the bracketed columns appear for the accelerating tuner only.
pub fn trajectory_columns(traj: &Trajectory) -> Table {
    let n = traj.dim();
    let second = traj.variant.is_second_order();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q_{i}")));
    if second {
        header.extend((1..=n).map(|i| format!("qdot_{i}")));
    }
    header.extend(["V", "err", "moderr", "norm_q", "acc_l2"].map(String::from));
    if second {
        header.push("acc_dissipation".into());
    }
    let mut table = Table::new(header);
    let c = &traj.channels;
    for k in 0..traj.len() {
        let mut row = Vec::with_capacity(table.header.len());
        row.push(traj.times[k]);
        row.extend(traj.q(k).iter());
        if let Some(dq) = traj.dq(k) {
            row.extend(dq.iter());
        }
        row.extend([c.v[k], c.err[k], c.moderr[k], c.norm_q[k], c.acc_l2[k]]);
        if second {
            row.push(c.acc_dissipation[k]);
        }
        table.rows.push(row);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn formatted_floats_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn table_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.rows.push(vec![0.1, -1.0 / 3.0]);
        t.rows.push(vec![1e-300, 12345.678901234567]);
        write_csv(&path, &t).unwrap();
        assert_eq!(read_csv(&path).unwrap(), t);
    }
}
