use super::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::Matrix;

/// Columns whose training standard deviation falls below this are constant.
pub const CONSTANT_COLUMN_STD: f64 = 1e-12;

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits per-column mean/std on `train` (population std).
pub fn fit_standardization(train: &Dataset) -> Result<Standardization> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set for standardization"));
    }
    if train.standardization.is_some() {
        return Err(Error::invalid("dataset is already standardized"));
    }
    let d = train.n_features();
    let mut s = Standardization::identity(d);
    for j in 0..d {
        let (m, sd) = mean_std((0..train.len()).map(|i| train.features[(i, j)]));
        s.feature_mean[j] = m;
        s.feature_std[j] = sd;
        s.feature_scaled[j] = sd > CONSTANT_COLUMN_STD * m.abs().max(1.0);
    }
    let (m, sd) = mean_std(train.targets.iter().copied());
    s.target_mean = m;
    s.target_std = if sd > CONSTANT_COLUMN_STD * m.abs().max(1.0) { sd } else { 1.0 };
    let constant = s.constant_columns();
    if !constant.is_empty() {
        log::warn!("constant feature columns passed through unscaled: {constant:?}");
    }
    Ok(s)
}

pub fn apply_standardization(data: &Dataset, s: &Standardization) -> Result<Dataset> {
    if data.n_features() != s.feature_mean.len() {
        return Err(Error::DimensionMismatch {
            context: "standardization columns",
            expected: s.feature_mean.len(),
            found: data.n_features(),
        });
    }
    if data.standardization.is_some() {
        return Err(Error::invalid("dataset is already standardized"));
    }
    let features = Matrix::from_fn(data.len(), data.n_features(), |i, j| s.transform_feature(j, data.features[(i, j)]));
    Ok(Dataset {
        features,
        targets: data.targets.iter().map(|&y| s.transform_target(y)).collect(),
        standardization: Some(s.clone()),
        ..data.clone()
    })
}

/// Standardizes `train` and every other split with statistics of `train` only.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    let s = fit_standardization(train)?;
    let t = apply_standardization(train, &s)?;
    let o = others.iter().map(|d| apply_standardization(d, &s)).collect::<Result<_>>()?;
    Ok((t, o))
}

/// Undoes the recorded standardization; unstandardized data is returned as is.
pub fn destandardize(data: &Dataset) -> Dataset {
    let Some(s) = &data.standardization else {
        return data.clone();
    };
    Dataset {
        features: Matrix::from_fn(data.len(), data.n_features(), |i, j| s.inverse_feature(j, data.features[(i, j)])),
        targets: data.targets.iter().map(|&y| s.inverse_target(y)).collect(),
        standardization: None,
        ..data.clone()
    }
}

/// Replaces an angle column by its `(cos, sin)` pair on the unit circle.
pub fn angle_to_unit_circle(data: &Dataset, column: usize, degrees: bool) -> Result<Dataset> {
    if column >= data.n_features() {
        return Err(Error::invalid(format!("angle column {column} out of range")));
    }
    if data.standardization.is_some() {
        return Err(Error::invalid("apply column transforms before standardization"));
    }
    let d = data.n_features();
    let mut values = Vec::with_capacity(data.len() * (d + 1));
    for i in 0..data.len() {
        for j in 0..d {
            let v = data.features[(i, j)];
            if j == column {
                let a = if degrees { v.to_radians() } else { v };
                values.push(a.cos());
                values.push(a.sin());
            } else {
                values.push(v);
            }
        }
    }
    let mut names = Vec::with_capacity(d + 1);
    for (j, n) in data.feature_names.iter().enumerate() {
        if j == column {
            names.push(format!("{n}_cos"));
            names.push(format!("{n}_sin"));
        } else {
            names.push(n.clone());
        }
    }
    Ok(Dataset {
        features: Matrix::from_vec(data.len(), d + 1, values)?,
        feature_names: names,
        ..data.clone()
    })
}

/// Unit-circle position of a 16-point compass direction (`"N"`, `"NNE"`, …),
/// with north at `(0, 1)` and east at `(1, 0)`.
pub fn compass_to_unit_circle(direction: &str) -> Option<(f64, f64)> {
    const POINTS: [&str; 16] = [
        "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW",
    ];
    let k = POINTS.iter().position(|p| *p == direction.trim())?;
    let bearing = (k as f64 * 22.5).to_radians();
    Some((bearing.sin(), bearing.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let x = Matrix::from_rows(&[[1.0, 5.0, 2.0], [2.0, 5.0, -1.0], [4.0, 5.0, 0.5]]).unwrap();
        Dataset::new(x, vec![10.0, 20.0, 60.0]).unwrap()
    }

    #[test]
    fn constant_column_untouched() {
        let (t, _) = standardize(&sample(), &[]).unwrap();
        let s = t.standardization.as_ref().unwrap();
        assert_eq!(s.constant_columns(), vec![1]);
        assert!((0..3).all(|i| t.features[(i, 1)] == 5.0));
    }

    #[test]
    fn already_standard_unchanged() {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let d = Dataset::new(x, vec![-1.0, 1.0]).unwrap();
        let (t, _) = standardize(&d, &[]).unwrap();
        assert!(t.features.sub(&d.features).unwrap().max_abs() < 1e-12);
        assert!(t.targets.iter().zip(&d.targets).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn round_trip_and_train_only_stats() {
        let d = sample();
        let other = d.subset(&[0]);
        let (t, o) = standardize(&d, &[&other]).unwrap();
        let back = destandardize(&t);
        assert!(back.features.sub(&d.features).unwrap().max_abs() < 1e-12);
        assert!(back.targets.iter().zip(&d.targets).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(o[0].x(0), t.x(0));
        assert!(standardize(&t, &[]).is_err());
    }

    #[test]
    fn angles() {
        let d = Dataset::from_scalars(&[0.0, 90.0], &[1.0, 2.0]).unwrap();
        let a = angle_to_unit_circle(&d, 0, true).unwrap();
        assert_eq!(a.n_features(), 2);
        assert!((a.x(1)[0]).abs() < 1e-15 && (a.x(1)[1] - 1.0).abs() < 1e-15);
        let (e_x, e_y) = compass_to_unit_circle("E").unwrap();
        assert!((e_x - 1.0).abs() < 1e-15 && e_y.abs() < 1e-15);
        assert!(compass_to_unit_circle("X").is_none());
    }
}
