use super::XplayError;

/// Sample Pearson correlation of two complete vectors.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, XplayError> {
    if xs.len() != ys.len() {
        return Err(XplayError::DegenerateInput(format!(
            "length mismatch ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(XplayError::DegenerateInput(format!("{} pairs, need at least 3", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(XplayError::DegenerateInput("constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson over the positions where both values are present.
pub fn pearson_pairwise(xs: &[Option<f64>], ys: &[Option<f64>]) -> Result<f64, XplayError> {
    if xs.len() != ys.len() {
        return Err(XplayError::DegenerateInput(format!(
            "length mismatch ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    pearson(&a, &b)
}

/// Pairwise-deletion correlation matrix over columns. Degenerate pairs are
/// `None`; the diagonal is 1 for every non-degenerate column.
pub fn pearson_matrix(columns: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
    let k = columns.len();
    let mut out = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = pearson_pairwise(&columns[i], &columns[j]).ok();
            out[i][j] = r.map(|v| if i == j { 1.0 } else { v });
            out[j][i] = out[i][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_line() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]),
            Err(XplayError::DegenerateInput(_))
        ));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        let xs = [Some(1.0), None, Some(2.0), Some(3.0)];
        let ys = [Some(1.0), Some(5.0), None, Some(3.0)];
        assert!(pearson_pairwise(&xs, &ys).is_err());
    }

    #[test]
    fn pairwise_deletion_drops_missing() {
        let xs = [Some(1.0), None, Some(2.0), Some(3.0), Some(4.0)];
        let ys = [Some(2.0), Some(100.0), Some(4.1), Some(5.9), Some(8.0)];
        let full = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.1, 5.9, 8.0]).unwrap();
        assert_eq!(pearson_pairwise(&xs, &ys).unwrap(), full);
    }

    #[test]
    fn hand_computed_value() {
        // x = (1,2,3,4), y = (1,3,2,4): sxy = 4, sxx = syy = 5.
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
    }
}
