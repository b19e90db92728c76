use std::io::Write;

use super::DataError;
use crate::scalar::Scalar;
use crate::shapley::IisVector;

/// `bag_id`, `instance_id`, `attention`; one `iis_class_<c>` column follows
/// per scored class.
pub const IIS_FIXED_COLUMNS: usize = 3;

/// Writes one CSV row per instance with its attention and per-class scores.
pub fn export_iis<T: Scalar, W: Write>(
    out: W,
    bag_id: &str,
    attention: &[T],
    per_class: &[IisVector<T>],
) -> Result<(), DataError> {
    let n = attention.len();
    if let Some(v) = per_class.iter().find(|v| v.len() != n) {
        return Err(DataError::InvalidRecord {
            id: bag_id.into(),
            reason: format!("score vector of length {} for {n} instances", v.len()),
        });
    }
    if attention
        .iter()
        .chain(per_class.iter().flat_map(|v| v.scores.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(DataError::NonFinite(format!("scores of bag {bag_id}")));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "bag_id".to_string(),
        "instance_id".into(),
        "attention".into(),
    ];
    for (i, v) in per_class.iter().enumerate() {
        header.push(format!("iis_class_{}", v.class.unwrap_or(i)));
    }
    w.write_record(&header)?;
    for (j, a) in attention.iter().enumerate() {
        let mut row = vec![bag_id.to_string(), j.to_string(), a.as_f64().to_string()];
        row.extend(per_class.iter().map(|v| v.scores[j].as_f64().to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::io("<csv>", e))?;
    Ok(())
}
