//! Daily donation records: `donor_id,date,lbs`.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::Deserialize;

use foodrescue::error::IoError;

pub const VALUES_HEADER: [&str; 3] = ["donor_id", "date", "lbs"];
pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Deserialize)]
struct Row {
    donor_id: String,
    date: String,
    lbs: f64,
}

/// Per-donor daily series over one shared calendar span.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyValues {
    pub first: NaiveDate,
    pub days: usize,
    pub series: BTreeMap<String, Vec<f64>>,
}

fn parse_error(path: &str, line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Read records, summing duplicates and filling days a donor has no record
/// for with zero across the span of all dates in the file.
pub fn read_values<R: Read>(input: R, path: &str) -> Result<DailyValues, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(parse_error(path, 1, "empty file"));
    }
    if header.iter().collect::<Vec<_>>() != VALUES_HEADER {
        return Err(parse_error(
            path,
            1,
            format!("expected header `{}`", VALUES_HEADER.join(",")),
        ));
    }
    let mut raw: Vec<(String, NaiveDate, f64)> = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            };
            parse_error(path, line, message)
        })?;
        let line = raw.len() as u64 + 2;
        let date = NaiveDate::parse_from_str(&row.date, DATE_FORMAT)
            .map_err(|e| parse_error(path, line, format!("bad date `{}`: {e}", row.date)))?;
        if !(row.lbs.is_finite() && row.lbs >= 0.0) {
            return Err(parse_error(path, line, format!("lbs must be >= 0, got {}", row.lbs)));
        }
        if row.donor_id.is_empty() {
            return Err(parse_error(path, line, "empty donor_id"));
        }
        raw.push((row.donor_id, date, row.lbs));
    }
    let (Some(first), Some(last)) = (raw.iter().map(|r| r.1).min(), raw.iter().map(|r| r.1).max()) else {
        return Err(parse_error(path, 2, "no records"));
    };
    let days = (last - first).num_days() as usize + 1;
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (id, date, lbs) in raw {
        let day = (date - first).num_days() as usize;
        series.entry(id).or_insert_with(|| vec![0.0; days])[day] += lbs;
    }
    Ok(DailyValues { first, days, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_gaps_and_sums_duplicates() {
        let text = "donor_id,date,lbs\n\
                    a,2010-01-01,5\n\
                    a,2010-01-01,2.5\n\
                    b,2010-01-03,10\n";
        let v = read_values(text.as_bytes(), "v.csv").unwrap();
        assert_eq!(v.days, 3);
        assert_eq!(v.series["a"], vec![7.5, 0.0, 0.0]);
        assert_eq!(v.series["b"], vec![0.0, 0.0, 10.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "donor_id,date,lbs\na,2010-01-01,5\na,2010-13-01,5\n";
        let err = read_values(text.as_bytes(), "v.csv").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "donor_id,date,lbs\na,2010-01-01,heavy\n";
        let err = read_values(text.as_bytes(), "v.csv").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(read_values("".as_bytes(), "v.csv").is_err());
        assert!(read_values("donor_id,date,lbs\n".as_bytes(), "v.csv").is_err());
    }
}
