/// Compressed sparse row matrix, built row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn new(ncols: usize) -> Self {
        Csr {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Appends a row; repeated columns are summed.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        let start = self.cols.len();
        for &(c, v) in entries {
            debug_assert!(c < self.ncols);
            if let Some(k) = self.cols[start..].iter().position(|&x| x == c) {
                self.vals[start + k] += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|(c, _)| *c == j).map(|(_, v)| v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_products() {
        let mut a = Csr::new(3);
        a.push_row(&[(0, 1.0), (2, 2.0), (0, 1.0)]);
        a.push_row(&[]);
        a.push_row(&[(1, -1.0)]);
        assert_eq!(a.nrows(), 3);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]), vec![8.0, 0.0, -2.0]);
    }
}
