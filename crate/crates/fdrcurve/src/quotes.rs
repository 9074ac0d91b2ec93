use crate::MarketError;

/// Benchmark quotes `(y, price)` at one time, sorted by maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub t: f64,
    pub quotes: Vec<(f64, f64)>,
}

impl QuoteSet {
    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }
}

/// Reads CSV with header `y,price`. Rows are sorted by maturity; a repeated
/// maturity is an error rather than something to average away. Negative
/// prices are accepted (spread contracts).
pub fn ingest_quotes(text: &str, t: f64) -> Result<QuoteSet, MarketError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| MarketError::Parse { context: "quotes header".into(), message: e.to_string() })?;
    if header.len() != 2 || &header[0] != "y" || &header[1] != "price" {
        return Err(MarketError::Parse {
            context: "quotes header".into(),
            message: format!("expected `y,price`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut quotes = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| MarketError::Parse { context: format!("quotes line {line}"), message: e.to_string() })?;
        let field = |k: usize, name: &str| -> Result<f64, MarketError> {
            let raw = row.get(k).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| MarketError::Parse {
                context: format!("quotes line {line}, column {name}"),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(MarketError::Parse {
                    context: format!("quotes line {line}, column {name}"),
                    message: "value must be finite".into(),
                });
            }
            Ok(v)
        };
        let y = field(0, "y")?;
        if y < 0.0 {
            return Err(MarketError::Parse {
                context: format!("quotes line {line}, column y"),
                message: "time to maturity must be nonnegative".into(),
            });
        }
        quotes.push((y, field(1, "price")?));
    }
    quotes.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = quotes.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(MarketError::Duplicate { maturity: w[0].0 });
    }
    Ok(QuoteSet { t, quotes })
}
