//! Serde adapters that write `Array2` values as arrays of row arrays.

use ndarray::Array2;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows<T: Clone>(rows: Vec<Vec<T>>) -> Result<Array2<T>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| e.to_string())
}

pub fn serialize<S, T>(m: &Array2<T>, s: S) -> Result<S::Ok, S::Error>
where
    S: Serializer,
    T: Serialize + Clone,
{
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, D, T>(d: D) -> Result<Array2<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de> + Clone,
{
    let rows = Vec::<Vec<T>>::deserialize(d)?;
    from_rows(rows).map_err(D::Error::custom)
}
