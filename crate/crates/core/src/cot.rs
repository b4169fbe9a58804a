//! MODIS cloud optical thickness extracts: one 3x3 pixel block around the
//! camera site per overpass, reduced to a single mean.

use std::io::Read;

use log::warn;

use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::time::UtcInstant;

pub const COT_HEADER: [&str; 10] = [
    "timestamp_utc",
    "c00",
    "c01",
    "c02",
    "c10",
    "c11",
    "c12",
    "c20",
    "c21",
    "c22",
];
pub const COT_MEAN_HEADER: [&str; 3] = ["timestamp_utc", "cot_mean", "n_valid"];

pub const COT_MAX: f64 = 100.0;
const FILL: &str = "NA";

/// One overpass: nine COT pixels in row-major order, `None` marking fill.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotGrid {
    pub timestamp: UtcInstant,
    cells: [Option<f64>; 9],
}

impl CotGrid {
    pub fn new(timestamp: UtcInstant, cells: [Option<f64>; 9]) -> Result<Self> {
        for (i, c) in cells.iter().enumerate() {
            if let Some(v) = *c {
                if !(0.0..=COT_MAX).contains(&v) {
                    return Err(Error::CotRange {
                        line: 0,
                        cell: COT_HEADER[i + 1].to_string(),
                        value: v,
                    });
                }
            }
        }
        Ok(CotGrid { timestamp, cells })
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * 3 + col]
    }

    pub fn cells(&self) -> &[Option<f64>; 9] {
        &self.cells
    }

    pub fn fill_mask(&self) -> [[bool; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.cells[r * 3 + c].is_none()))
    }

    pub fn n_valid(&self) -> usize {
        self.cells.iter().flatten().count()
    }
}

/// Mean over the non-fill cells. The sum runs over sorted values so the
/// result does not depend on cell order.
pub fn mean_cot(grid: &CotGrid) -> Result<f64> {
    let mut valid: Vec<f64> = grid.cells.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    valid.sort_by(f64::total_cmp);
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(mean.clamp(valid[0], valid[valid.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotMean {
    pub timestamp: UtcInstant,
    pub cot_mean: f64,
    pub n_valid: usize,
}

/// Reduces grids to means, dropping (with a warning) any grid with fewer
/// than `min_valid` usable cells. Returns the kept means and the number
/// dropped.
pub fn reduce_grids(grids: &[CotGrid], min_valid: usize) -> (Vec<CotMean>, usize) {
    let min_valid = min_valid.max(1);
    let mut kept = Vec::with_capacity(grids.len());
    let mut dropped = 0;
    for g in grids {
        let n_valid = g.n_valid();
        if n_valid < min_valid {
            warn!(
                "dropping COT grid at {}: {n_valid} valid cells (minimum {min_valid})",
                g.timestamp
            );
            dropped += 1;
            continue;
        }
        match mean_cot(g) {
            Ok(cot_mean) => kept.push(CotMean {
                timestamp: g.timestamp,
                cot_mean,
                n_valid,
            }),
            Err(e) => {
                warn!("dropping COT grid at {}: {e}", g.timestamp);
                dropped += 1;
            }
        }
    }
    (kept, dropped)
}

/// Parses the COT extract CSV. Timestamps must be strictly increasing;
/// `NA` cells become fill.
pub fn parse_cot_csv<R: Read>(input: R) -> Result<Vec<CotGrid>> {
    let rows = csvio::read_rows(input, &COT_HEADER)?;
    let mut out: Vec<CotGrid> = Vec::with_capacity(rows.len());
    for row in rows {
        let timestamp = row.timestamp(0)?;
        let mut cells = [None; 9];
        for (i, cell) in cells.iter_mut().enumerate() {
            let name = COT_HEADER[i + 1];
            let s = row.field(i + 1);
            if s == FILL {
                continue;
            }
            let v = csvio::parse_f64(row.line, name, s)?;
            if !(0.0..=COT_MAX).contains(&v) {
                return Err(Error::CotRange {
                    line: row.line,
                    cell: name.to_string(),
                    value: v,
                });
            }
            *cell = Some(v);
        }
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::Ordering {
                    line: row.line,
                    detail: format!("{timestamp} does not follow {}", prev.timestamp),
                });
            }
        }
        out.push(CotGrid { timestamp, cells });
    }
    Ok(out)
}

pub fn write_cot_csv(grids: &[CotGrid]) -> Vec<u8> {
    let mut w = TableWriter::new(&COT_HEADER);
    for g in grids {
        let mut fields = Vec::with_capacity(10);
        fields.push(g.timestamp.to_string());
        fields.extend(
            g.cells
                .iter()
                .map(|c| c.map(csvio::fmt_f64).unwrap_or_else(|| FILL.to_string())),
        );
        w.row(fields);
    }
    w.into_bytes()
}

pub fn write_cot_mean_csv(means: &[CotMean]) -> Vec<u8> {
    let mut w = TableWriter::new(&COT_MEAN_HEADER);
    for m in means {
        w.row([
            m.timestamp.to_string(),
            csvio::fmt_f64(m.cot_mean),
            m.n_valid.to_string(),
        ]);
    }
    w.into_bytes()
}

pub fn parse_cot_mean_csv<R: Read>(input: R) -> Result<Vec<CotMean>> {
    let mut out: Vec<CotMean> = Vec::new();
    for row in csvio::read_rows(input, &COT_MEAN_HEADER)? {
        let m = CotMean {
            timestamp: row.timestamp(0)?,
            cot_mean: row.f64(1, "cot_mean")?,
            n_valid: row.u64(2, "n_valid")? as usize,
        };
        if !(0.0..=COT_MAX).contains(&m.cot_mean) {
            return Err(Error::CotRange {
                line: row.line,
                cell: "cot_mean".into(),
                value: m.cot_mean,
            });
        }
        if !(1..=9).contains(&m.n_valid) {
            return Err(Error::Parse {
                line: row.line,
                message: format!("n_valid {} not in 1..=9", m.n_valid),
            });
        }
        if let Some(prev) = out.last() {
            if m.timestamp <= prev.timestamp {
                return Err(Error::Ordering {
                    line: row.line,
                    detail: format!("{} does not follow {}", m.timestamp, prev.timestamp),
                });
            }
        }
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const HDR: &str = "timestamp_utc,c00,c01,c02,c10,c11,c12,c20,c21,c22\n";

    fn t0() -> UtcInstant {
        UtcInstant::from_ymd_hms(2015, 3, 14, 4, 10, 0).unwrap()
    }

    #[test]
    fn uniform_row() {
        let csv = format!("{HDR}2015-03-14T04:10:00Z,12,12,12,12,12,12,12,12,12\n");
        let grids = parse_cot_csv(csv.as_bytes()).unwrap();
        assert_eq!(grids.len(), 1);
        assert!(grids[0].cells().iter().all(|c| *c == Some(12.0)));
        assert_eq!(grids[0].timestamp, t0());
    }

    #[test]
    fn fill_in_centre_cell() {
        let csv = format!("{HDR}2015-03-14T04:10:00Z,1,2,3,4,NA,6,7,8,9\n");
        let g = parse_cot_csv(csv.as_bytes()).unwrap()[0];
        let mask = g.fill_mask();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(mask[r][c], (r, c) == (1, 1));
            }
        }
        assert_eq!(g.cell(1, 2), Some(6.0));
    }

    #[test]
    fn out_of_range_cell_is_named() {
        let csv = format!("{HDR}2015-03-14T04:10:00Z,1,2,3,4,5,105,7,8,9\n");
        match parse_cot_csv(csv.as_bytes()) {
            Err(Error::CotRange { line, cell, value }) => {
                assert_eq!((line, cell.as_str(), value), (2, "c12", 105.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_unordered_rows() {
        let csv = format!(
            "{HDR}2015-03-14T04:10:00Z,1,2,3,4,5,6,7,8,9\n2015-03-14T07:10:00Z,1,2,x,4,5,6,7,8,9\n"
        );
        assert!(matches!(
            parse_cot_csv(csv.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let csv = format!(
            "{HDR}2015-03-14T04:10:00Z,1,2,3,4,5,6,7,8,9\n2015-03-14T04:10:00Z,1,2,3,4,5,6,7,8,9\n"
        );
        assert!(matches!(
            parse_cot_csv(csv.as_bytes()),
            Err(Error::Ordering { line: 3, .. })
        ));
        let csv = format!("{HDR}2015-03-14T04:10:00Z,1,2,3\n");
        assert!(matches!(
            parse_cot_csv(csv.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn means_with_fill() {
        let g = CotGrid::new(t0(), [Some(50.0); 9]).unwrap();
        assert_eq!(mean_cot(&g).unwrap(), 50.0);
        let mut cells = [None; 9];
        cells[0] = Some(0.0);
        cells[8] = Some(100.0);
        assert_eq!(mean_cot(&CotGrid::new(t0(), cells).unwrap()).unwrap(), 50.0);
        assert!(matches!(
            mean_cot(&CotGrid::new(t0(), [None; 9]).unwrap()),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn hand_computed_partial_fills() {
        // (valid cells, expected mean) for 1..=8 fill cells
        let cases: [(&[Option<f64>; 9], f64); 4] = [
            (
                &[
                    Some(10.0),
                    None,
                    Some(20.0),
                    Some(30.0),
                    Some(40.0),
                    Some(50.0),
                    Some(60.0),
                    Some(70.0),
                    Some(80.0),
                ],
                45.0,
            ),
            (
                &[
                    None,
                    None,
                    None,
                    Some(3.0),
                    Some(4.5),
                    None,
                    None,
                    Some(7.5),
                    None,
                ],
                5.0,
            ),
            (
                &[None, None, None, None, None, None, None, None, Some(42.25)],
                42.25,
            ),
            (
                &[
                    Some(0.0),
                    None,
                    None,
                    None,
                    Some(100.0),
                    None,
                    None,
                    None,
                    Some(5.0),
                ],
                35.0,
            ),
        ];
        for (cells, want) in cases {
            let g = CotGrid::new(t0(), *cells).unwrap();
            assert_abs_diff_eq!(mean_cot(&g).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn reduce_drops_all_fill_and_sparse_grids() {
        let mut sparse = [None; 9];
        sparse[4] = Some(9.0);
        let grids = [
            CotGrid::new(t0(), [Some(1.0); 9]).unwrap(),
            CotGrid::new(t0().add_seconds(60), [None; 9]).unwrap(),
            CotGrid::new(t0().add_seconds(120), sparse).unwrap(),
        ];
        let (kept, dropped) = reduce_grids(&grids, 1);
        assert_eq!((kept.len(), dropped), (2, 1));
        let (kept, dropped) = reduce_grids(&grids, 2);
        assert_eq!((kept.len(), dropped), (1, 2));
        assert_eq!(kept[0].n_valid, 9);
    }

    fn cell() -> impl Strategy<Value = Option<f64>> {
        prop_oneof![1 => Just(None), 4 => (0.0f64..=100.0).prop_map(Some)]
    }

    fn grid() -> impl Strategy<Value = [Option<f64>; 9]> {
        proptest::array::uniform9(cell())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn mean_bounded_and_permutation_invariant(cells in grid(), perm in Just((0..9).collect::<Vec<usize>>()).prop_shuffle()) {
            let g = CotGrid::new(t0(), cells).unwrap();
            let valid: Vec<f64> = cells.iter().flatten().copied().collect();
            match mean_cot(&g) {
                Err(Error::EmptyGrid) => prop_assert!(valid.is_empty()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
                Ok(m) => {
                    let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(lo <= m && m <= hi && (0.0..=100.0).contains(&m));
                    let shuffled: [Option<f64>; 9] = std::array::from_fn(|i| cells[perm[i]]);
                    prop_assert_eq!(mean_cot(&CotGrid::new(t0(), shuffled).unwrap()).unwrap(), m);
                }
            }
        }

        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(grid(), 0..12)) {
            let grids: Vec<CotGrid> = rows.iter().enumerate()
                .map(|(i, c)| CotGrid::new(t0().add_seconds(i as i64 * 10_800), *c).unwrap())
                .collect();
            let bytes = write_cot_csv(&grids);
            let parsed = parse_cot_csv(bytes.as_slice()).unwrap();
            prop_assert_eq!(&parsed, &grids);
            prop_assert_eq!(write_cot_csv(&parsed), bytes);
        }
    }
}
