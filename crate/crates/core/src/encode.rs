//! Relational encoding of continuous object×attribute data.
//!
//! Each object becomes an attribute×attribute slice of pairwise order
//! relations: entry `(o, i, j)` is an observed one if attribute `i` exceeds
//! attribute `j` for object `o`, an observed zero if it is smaller, and
//! missing on ties, on the diagonal, or when either value is missing.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ObservedTensor, MISSING, OBSERVED_ONE, OBSERVED_ZERO};

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousMatrix {
    pub object_names: Vec<String>,
    pub attribute_names: Vec<String>,
    /// Row-major `objects × attributes`; `None` marks a missing cell.
    pub values: Vec<Option<f64>>,
}

impl ContinuousMatrix {
    pub fn new(object_names: Vec<String>, attribute_names: Vec<String>, values: Vec<Option<f64>>) -> Result<Self> {
        if attribute_names.len() < 2 {
            return Err(Error::arg(format!(
                "need at least 2 attributes, got {}",
                attribute_names.len()
            )));
        }
        if values.len() != object_names.len() * attribute_names.len() {
            return Err(Error::arg("value count does not match objects × attributes"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("values must be finite"));
        }
        Ok(Self {
            object_names,
            attribute_names,
            values,
        })
    }

    pub fn objects(&self) -> usize {
        self.object_names.len()
    }

    pub fn attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn get(&self, o: usize, a: usize) -> Option<f64> {
        self.values[o * self.attributes() + a]
    }

    /// Reads CSV with a header of attribute names and the object ID in the
    /// first column. Empty cells are missing.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = reader.headers()?.clone();
        let attribute_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut object_names = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let mut fields = record.iter();
            object_names.push(fields.next().unwrap_or_default().to_string());
            for (col, cell) in fields.enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    values.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::parse(format!("line {line}, column {}", col + 2), format!("`{cell}` is not a number"))
                    })?;
                    values.push(Some(v));
                }
            }
        }
        Self::new(object_names, attribute_names, values)
    }

    /// Standardises every attribute to mean 0 and sample standard deviation 1
    /// over its non-missing cells.
    pub fn zscore_normalize(&self) -> Result<Self> {
        let (objects, attributes) = (self.objects(), self.attributes());
        let mut out = self.clone();
        for a in 0..attributes {
            let column: Vec<f64> = (0..objects).filter_map(|o| self.get(o, a)).collect();
            let name = &self.attribute_names[a];
            if column.len() < 2 {
                return Err(Error::arg(format!(
                    "column `{name}` has fewer than 2 non-missing values"
                )));
            }
            let n = column.len() as f64;
            let mean = column.iter().sum::<f64>() / n;
            let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::ZeroVariance(name.clone()));
            }
            for o in 0..objects {
                if let Some(v) = self.get(o, a) {
                    out.values[o * attributes + a] = Some((v - mean) / sd);
                }
            }
        }
        Ok(out)
    }

    /// Writes `kind<TAB>index<TAB>label` lines for objects then attributes.
    pub fn write_name_map<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, name) in self.object_names.iter().enumerate() {
            writeln!(w, "object\t{i}\t{name}")?;
        }
        for (i, name) in self.attribute_names.iter().enumerate() {
            writeln!(w, "attribute\t{i}\t{name}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Encodes into an `objects × attributes × attributes` tensor. Differences
/// of at most `epsilon` count as ties.
pub fn relational_encode(m: &ContinuousMatrix, epsilon: f64) -> Result<ObservedTensor> {
    let g = m.attributes();
    if g < 2 {
        return Err(Error::arg("relational encoding needs at least 2 attributes"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::arg(format!("tie tolerance {epsilon} must be non-negative")));
    }
    let mut entries = vec![MISSING; m.objects() * g * g];
    entries.par_chunks_mut(g * g).enumerate().for_each(|(o, slice)| {
        for i in 0..g {
            let Some(vi) = m.get(o, i) else { continue };
            for j in 0..g {
                let Some(vj) = m.get(o, j) else { continue };
                let diff = vi - vj;
                slice[i * g + j] = if diff > epsilon {
                    OBSERVED_ONE
                } else if -diff > epsilon {
                    OBSERVED_ZERO
                } else {
                    MISSING
                };
            }
        }
    });
    ObservedTensor::new(vec![m.objects(), g, g], entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[&[Option<f64>]]) -> ContinuousMatrix {
        let g = rows[0].len();
        ContinuousMatrix::new(
            (0..rows.len()).map(|i| format!("o{i}")).collect(),
            (0..g).map(|i| format!("a{i}")).collect(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_standardisation() {
        let m = matrix(&[&[Some(1.0), Some(5.0)], &[Some(3.0), Some(2.0)]]);
        let z = m.zscore_normalize().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((z.get(0, 0).unwrap() + h).abs() < 1e-12);
        assert!((z.get(1, 0).unwrap() - h).abs() < 1e-12);
        let again = z.zscore_normalize().unwrap();
        for (a, b) in z.values.iter().zip(&again.values) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn random_matrix_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let values = (0..20).map(|_| Some(rng.gen_range(-5.0..5.0))).collect();
        let m = ContinuousMatrix::new(
            (0..5).map(|i| i.to_string()).collect(),
            (0..4).map(|i| i.to_string()).collect(),
            values,
        )
        .unwrap();
        let z = m.zscore_normalize().unwrap();
        for a in 0..4 {
            let col: Vec<f64> = (0..5).map(|o| z.get(o, a).unwrap()).collect();
            let mean = col.iter().sum::<f64>() / 5.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalisation_errors() {
        let flat = matrix(&[&[Some(1.0), Some(2.0)], &[Some(1.0), Some(3.0)]]);
        assert!(matches!(flat.zscore_normalize(), Err(Error::ZeroVariance(name)) if name == "a0"));
        let sparse = matrix(&[&[None, Some(2.0)], &[Some(1.0), Some(3.0)]]);
        assert!(sparse.zscore_normalize().is_err());
        // missing cells survive normalisation
        let m = matrix(&[&[None, Some(2.0)], &[Some(1.0), Some(3.0)], &[Some(2.0), Some(1.0)]]);
        assert_eq!(m.zscore_normalize().unwrap().get(0, 0), None);
    }

    #[test]
    fn encoding_examples() {
        let m = matrix(&[&[Some(0.3), Some(0.1)], &[Some(0.2), Some(0.2)]]);
        let t = relational_encode(&m, 0.0).unwrap();
        assert_eq!(t.dims(), &[2, 2, 2]);
        assert_eq!(t.get(&[0, 0, 1]).unwrap(), OBSERVED_ONE);
        assert_eq!(t.get(&[0, 1, 0]).unwrap(), OBSERVED_ZERO);
        assert_eq!(t.get(&[1, 0, 1]).unwrap(), MISSING);
        assert_eq!(t.get(&[1, 1, 0]).unwrap(), MISSING);
        assert_eq!(t.get(&[0, 0, 0]).unwrap(), MISSING);

        // epsilon widens ties
        let t = relational_encode(&m, 0.5).unwrap();
        assert_eq!(t.observed_count(), 0);
        assert!(ContinuousMatrix::new(vec!["o".into()], vec!["a".into()], vec![Some(1.0)]).is_err());
    }

    #[test]
    fn encoding_invariants_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let values: Vec<Option<f64>> = (0..9)
                .map(|_| if rng.gen_bool(0.15) { None } else { Some(f64::from(rng.gen_range(0u8..4))) })
                .collect();
            let m = ContinuousMatrix::new(
                (0..3).map(|i| i.to_string()).collect(),
                (0..3).map(|i| i.to_string()).collect(),
                values,
            )
            .unwrap();
            let t = relational_encode(&m, 0.0).unwrap();
            for o in 0..3 {
                let mut ordered_pairs = 0;
                for i in 0..3 {
                    assert_eq!(t.get(&[o, i, i]).unwrap(), MISSING);
                    for j in 0..3 {
                        let a = t.get(&[o, i, j]).unwrap();
                        let b = t.get(&[o, j, i]).unwrap();
                        assert_eq!(a, -b);
                        if i < j {
                            if let (Some(x), Some(y)) = (m.get(o, i), m.get(o, j)) {
                                ordered_pairs += usize::from(x != y);
                            }
                        }
                    }
                }
                let observed = (0..9).filter(|&c| t.entries()[o * 9 + c] != MISSING).count();
                assert_eq!(observed, 2 * ordered_pairs);
            }
        }
    }

    #[test]
    fn csv_input() {
        let text = "id,g1,g2,g3\np1,1.5,,2\np2,0,3,-1\n";
        let m = ContinuousMatrix::read_csv(text.as_bytes()).unwrap();
        assert_eq!(m.object_names, vec!["p1", "p2"]);
        assert_eq!(m.attribute_names, vec!["g1", "g2", "g3"]);
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(1, 2), Some(-1.0));
        let err = ContinuousMatrix::read_csv("id,a,b\np,1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ContinuousMatrix::read_csv("id,a,b\np,1\n".as_bytes()).is_err());
    }
}
