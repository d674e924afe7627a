//! Plain-text point lists.
//!
//! One point per line, coordinates separated by commas and/or whitespace.
//! `#` starts a comment; blank lines are skipped. Every point must have the
//! same number of finite coordinates.

use thiserror::Error;

/// Points with more coordinates than this are rejected.
pub const MAX_POINT_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct PointListError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> PointListError {
    PointListError {
        line,
        message: message.into(),
    }
}

/// Parses a single point such as `0.5,1` or `0.5 1`.
pub fn parse_point(text: &str, line: usize) -> Result<Vec<f64>, PointListError> {
    let mut p = Vec::new();
    for tok in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if tok.is_empty() {
            continue;
        }
        if p.len() == MAX_POINT_DIM {
            return Err(err(line, format!("more than {MAX_POINT_DIM} coordinates")));
        }
        let x: f64 = tok
            .parse()
            .map_err(|_| err(line, format!("`{tok}` is not a number")))?;
        if !x.is_finite() {
            return Err(err(line, format!("`{tok}` is not finite")));
        }
        p.push(x);
    }
    if p.is_empty() {
        return Err(err(line, "empty point"));
    }
    Ok(p)
}

pub fn parse_point_list(text: &str) -> Result<Vec<Vec<f64>>, PointListError> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let p = parse_point(body, i + 1)?;
        if let Some(first) = points.first() {
            if first.len() != p.len() {
                return Err(err(
                    i + 1,
                    format!("point has {} coordinates, earlier points have {}", p.len(), first.len()),
                ));
            }
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(err(0, "no points"));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_separators_and_comments() {
        let text = "# header\n0.5, 1\n\n2 3 # trailing\n-1,\t4e-1\n";
        let p = parse_point_list(text).unwrap();
        assert_eq!(p, vec![vec![0.5, 1.0], vec![2.0, 3.0], vec![-1.0, 0.4]]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_point_list("1,2\n3\n").unwrap_err().line, 2);
        assert_eq!(parse_point_list("1,x\n").unwrap_err().line, 1);
        assert!(parse_point_list("inf\n").is_err());
        assert!(parse_point_list("NaN\n").is_err());
        assert!(parse_point_list("# only comments\n\n").is_err());
        let wide = vec!["1"; MAX_POINT_DIM + 1].join(",");
        assert!(parse_point_list(&wide).is_err());
    }
}
