//! Serde adapters writing matrices as `{"rows", "cols", "data"}` with
//! row-major data, and complex matrices with separate `re`/`im` arrays.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numerics::{ComplexMatrix, RealMatrix, RealVector};
use num_complex::Complex64;

#[derive(Serialize, Deserialize)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseComplex {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

fn row_major<T: Copy>(rows: usize, cols: usize, at: impl Fn(usize, usize) -> T) -> Vec<T> {
    (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| at(i, j)).collect()
}

fn check_len<E: serde::de::Error>(rows: usize, cols: usize, len: usize) -> Result<(), E> {
    if rows.checked_mul(cols) != Some(len) {
        return Err(E::custom(format!("{rows}x{cols} matrix with {len} entries")));
    }
    Ok(())
}

pub mod real {
    use super::*;

    pub fn serialize<S: Serializer>(m: &RealMatrix, s: S) -> Result<S::Ok, S::Error> {
        let (rows, cols) = m.shape();
        Dense {
            rows,
            cols,
            data: row_major(rows, cols, |i, j| m[(i, j)]),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMatrix, D::Error> {
        let dense = Dense::deserialize(d)?;
        check_len(dense.rows, dense.cols, dense.data.len())?;
        Ok(RealMatrix::from_row_slice(dense.rows, dense.cols, &dense.data))
    }
}

pub mod complex {
    use super::*;

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        let (rows, cols) = m.shape();
        DenseComplex {
            rows,
            cols,
            re: row_major(rows, cols, |i, j| m[(i, j)].re),
            im: row_major(rows, cols, |i, j| m[(i, j)].im),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        let dense = DenseComplex::deserialize(d)?;
        check_len(dense.rows, dense.cols, dense.re.len())?;
        check_len(dense.rows, dense.cols, dense.im.len())?;
        let values: Vec<Complex64> = dense.re.iter().zip(&dense.im).map(|(r, i)| Complex64::new(*r, *i)).collect();
        Ok(ComplexMatrix::from_row_slice(dense.rows, dense.cols, &values))
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &RealVector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealVector, D::Error> {
        Ok(RealVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "real")]
        m: RealMatrix,
        #[serde(with = "complex")]
        z: ComplexMatrix,
        #[serde(with = "vector")]
        v: RealVector,
    }

    #[test]
    fn round_trip_is_exact() {
        let h = Holder {
            m: RealMatrix::from_row_slice(2, 3, &[1.0, 0.1, -3.5e-17, 4.0, 5.0, std::f64::consts::PI]),
            z: ComplexMatrix::from_row_slice(1, 2, &[Complex64::new(0.1, -0.2), Complex64::new(1e300, 0.0)]),
            v: RealVector::from_vec(vec![0.3, 1.0 / 3.0]),
        };
        let text = serde_json::to_string(&h).unwrap();
        assert!(text.contains(r#""data":[1.0,0.1,-3.5e-17,4.0,5.0,3.141592653589793]"#));
        let back: Holder = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn bad_shape_is_rejected() {
        let text = r#"{"m":{"rows":2,"cols":2,"data":[1.0]},"z":{"rows":0,"cols":0,"re":[],"im":[]},"v":[]}"#;
        assert!(serde_json::from_str::<Holder>(text).is_err());
    }
}
