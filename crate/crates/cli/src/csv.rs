//! Reader for the flat comma-separated artifacts this crate writes (no
//! quoting, header on the first line).

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or("empty file")?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(format!(
                    "row {} has {} fields, header has {}",
                    i + 2,
                    row.len(),
                    header.len()
                ));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn text_column(&self, name: &str) -> Option<Vec<String>> {
        let i = self.index(name)?;
        Some(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    /// Numeric column; empty or unparsable cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[i].parse::<f64>().unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_columns() {
        let t = Table::parse("a,b\n1,x\n2.5,\n").unwrap();
        assert_eq!(t.column("a").unwrap(), vec![1.0, 2.5]);
        assert!(t.column("b").unwrap().iter().all(|v| v.is_nan()));
        assert_eq!(t.text_column("b").unwrap(), vec!["x", ""]);
        assert!(t.column("c").is_none());
        assert!(Table::parse("a,b\n1\n").is_err());
        assert!(Table::parse("").is_err());
        assert_eq!(Table::parse("inf\ninf\n").unwrap().column("inf").unwrap(), vec![f64::INFINITY]);
    }
}
