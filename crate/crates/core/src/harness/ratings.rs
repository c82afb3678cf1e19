//! Rating-triple tables and the user-level warm/cold split.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One observed rating, in internal indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// (user, item, rating) triples with id maps to internal indices.
///
/// Duplicate (user, item) pairs collapse to the last occurrence; triples are
/// kept sorted by (user, item). Internal indices are assigned by first
/// appearance, so parsing is order-deterministic. Users with no surviving
/// triples are representable (see [`RatingsTable::from_parts`]).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    triples: Vec<RatingTriple>,
}

impl RatingsTable {
    /// Builds a table from explicit id lists and index triples. Ids must be
    /// unique; triples may reference any listed id, and ids with no triples
    /// are allowed.
    pub fn from_parts(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        triples: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        check_unique(&user_ids, "user")?;
        check_unique(&item_ids, "item")?;
        let mut last: HashMap<(usize, usize), f64> = HashMap::new();
        for &(user, item, rating) in &triples {
            if user >= user_ids.len() || item >= item_ids.len() {
                return Err(Error::invalid(format!(
                    "triple ({user}, {item}) out of range"
                )));
            }
            if !rating.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite rating for ({user}, {item})"
                )));
            }
            last.insert((user, item), rating);
        }
        let mut triples: Vec<RatingTriple> = last
            .into_iter()
            .map(|((user, item), rating)| RatingTriple { user, item, rating })
            .collect();
        triples.sort_by_key(|t| (t.user, t.item));
        Ok(Self {
            user_ids,
            item_ids,
            triples,
        })
    }

    /// Convenience constructor from external-id rows, mostly for tests.
    pub fn from_rows(rows: &[(&str, &str, f64)]) -> Result<Self> {
        let mut user_ids: Vec<String> = Vec::new();
        let mut item_ids: Vec<String> = Vec::new();
        let mut user_index: HashMap<&str, usize> = HashMap::new();
        let mut item_index: HashMap<&str, usize> = HashMap::new();
        let mut triples = Vec::with_capacity(rows.len());
        for &(user, item, rating) in rows {
            let u = *user_index.entry(user).or_insert_with(|| {
                user_ids.push(user.to_string());
                user_ids.len() - 1
            });
            let i = *item_index.entry(item).or_insert_with(|| {
                item_ids.push(item.to_string());
                item_ids.len() - 1
            });
            triples.push((u, i, rating));
        }
        Self::from_parts(user_ids, item_ids, triples)
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    pub fn user_id(&self, u: usize) -> &str {
        &self.user_ids[u]
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.item_ids[i]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Triples grouped per user, in (user, item) order.
    pub fn by_user(&self) -> Vec<Vec<RatingTriple>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for &t in &self.triples {
            out[t.user].push(t);
        }
        out
    }

    /// Triples grouped per item.
    pub fn by_item(&self) -> Vec<Vec<RatingTriple>> {
        let mut out = vec![Vec::new(); self.n_items()];
        for &t in &self.triples {
            out[t.item].push(t);
        }
        out
    }

    /// A new table restricted to the given users (all their ratings travel
    /// together). Id maps are rebuilt by first appearance in triple order.
    fn restrict_to_users(&self, keep: &[bool]) -> Result<Self> {
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut user_map: HashMap<usize, usize> = HashMap::new();
        let mut item_map: HashMap<usize, usize> = HashMap::new();
        let mut triples = Vec::new();
        for t in &self.triples {
            if !keep[t.user] {
                continue;
            }
            let u = *user_map.entry(t.user).or_insert_with(|| {
                user_ids.push(self.user_ids[t.user].clone());
                user_ids.len() - 1
            });
            let i = *item_map.entry(t.item).or_insert_with(|| {
                item_ids.push(self.item_ids[t.item].clone());
                item_ids.len() - 1
            });
            triples.push((u, i, t.rating));
        }
        Self::from_parts(user_ids, item_ids, triples)
    }
}

fn check_unique(ids: &[String], kind: &str) -> Result<()> {
    let mut seen = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if id.is_empty() || id.contains(char::is_whitespace) || id.contains(',') {
            return Err(Error::invalid(format!(
                "{kind} id {id:?} is empty or contains whitespace/comma"
            )));
        }
        if let Some(prev) = seen.insert(id.as_str(), i) {
            return Err(Error::invalid(format!(
                "duplicate {kind} id {id:?} at positions {prev} and {i}"
            )));
        }
    }
    Ok(())
}

/// Parses `user,item,rating[,timestamp]` rows, tab- or comma-separated, with
/// an optional header line. Timestamps are ignored; duplicate (user, item)
/// pairs keep the last rating.
pub fn load_ratings(path: &Path) -> Result<RatingsTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(file, path)
}

/// As [`load_ratings`] from any reader; `path` is used in error messages.
pub fn read_ratings<R: Read>(input: R, path: &Path) -> Result<RatingsTable> {
    let reader = BufReader::new(input);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if trimmed.contains('\t') {
            trimmed.split('\t').map(str::trim).collect()
        } else {
            trimmed.split(',').map(str::trim).collect()
        };
        if fields.len() < 3 || fields.len() > 4 {
            return Err(parse_err(
                lineno,
                format!("expected 3 or 4 fields, got {}", fields.len()),
            ));
        }
        let rating: f64 = match fields[2].parse() {
            Ok(r) => r,
            Err(_) if lineno == 1 => continue, // header line
            Err(e) => {
                return Err(parse_err(
                    lineno,
                    format!("rating {:?} is not numeric: {e}", fields[2]),
                ))
            }
        };
        if !rating.is_finite() {
            return Err(parse_err(lineno, format!("rating {rating} is not finite")));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(lineno, "empty user or item id".into()));
        }
        let u = *user_index.entry(fields[0].to_string()).or_insert_with(|| {
            user_ids.push(fields[0].to_string());
            user_ids.len() - 1
        });
        let i = *item_index.entry(fields[1].to_string()).or_insert_with(|| {
            item_ids.push(fields[1].to_string());
            item_ids.len() - 1
        });
        triples.push((u, i, rating));
    }
    if triples.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no rating rows found",
            path.display()
        )));
    }
    RatingsTable::from_parts(user_ids, item_ids, triples)
}

/// Splits users into warm and cold tables by a seeded shuffle at the user
/// level. With ratio `a:b`, the warm side gets `floor(n * a / (a + b))`
/// users; both sides must end up non-empty.
pub fn split_users(
    ratings: &RatingsTable,
    ratio: (u32, u32),
    seed: u64,
) -> Result<(RatingsTable, RatingsTable)> {
    let (a, b) = ratio;
    if a == 0 || b == 0 {
        return Err(Error::invalid("split ratio parts must be positive"));
    }
    let n = ratings.n_users();
    if n < 2 {
        return Err(Error::invalid(format!(
            "cannot split {n} user(s) into warm and cold parts"
        )));
    }
    let warm_count = (n as u64 * a as u64 / (a as u64 + b as u64)) as usize;
    if warm_count == 0 || warm_count == n {
        return Err(Error::invalid(format!(
            "ratio {a}:{b} leaves an empty side for {n} users"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut warm_mask = vec![false; n];
    for &u in order.iter().take(warm_count) {
        warm_mask[u] = true;
    }
    let cold_mask: Vec<bool> = warm_mask.iter().map(|&w| !w).collect();
    let warm = ratings.restrict_to_users(&warm_mask)?;
    let cold = ratings.restrict_to_users(&cold_mask)?;
    Ok((warm, cold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with_users(n: usize) -> RatingsTable {
        let rows: Vec<(String, String, f64)> = (0..n)
            .map(|u| (format!("u{u}"), format!("i{}", u % 3), 3.0))
            .collect();
        let rows_ref: Vec<(&str, &str, f64)> =
            rows.iter().map(|(u, i, r)| (u.as_str(), i.as_str(), *r)).collect();
        RatingsTable::from_rows(&rows_ref).unwrap()
    }

    #[test]
    fn parse_three_line_tsv() {
        let data = "u1\ti1\t5\nu2\ti1\t3\nu1\ti2\t4\n";
        let table = read_ratings(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(table.n_ratings(), 3);
        assert_eq!(table.n_users(), 2);
        assert_eq!(table.n_items(), 2);
    }

    #[test]
    fn parse_csv_with_header_and_timestamp() {
        let data = "userId,movieId,rating,timestamp\n1,10,4.0,123\n2,10,2.5,456\n";
        let table = read_ratings(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(table.n_ratings(), 2);
        assert_eq!(table.user_id(0), "1");
    }

    #[test]
    fn duplicate_pair_last_wins() {
        let data = "u1,i1,5\nu1,i1,1\n";
        let table = read_ratings(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(table.n_ratings(), 1);
        assert_eq!(table.triples()[0].rating, 1.0);
    }

    #[test]
    fn non_numeric_rating_names_line() {
        let data = "u1,i1,5\nu2,i2,abc\n";
        let err = read_ratings(data.as_bytes(), Path::new("mem")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(read_ratings(&b""[..], Path::new("mem")).is_err());
        // A header alone has no data rows either.
        assert!(read_ratings(&b"user,item,rating\n"[..], Path::new("mem")).is_err());
    }

    #[test]
    fn split_ten_users_four_to_one() {
        let table = table_with_users(10);
        let (warm, cold) = split_users(&table, (4, 1), 7).unwrap();
        assert_eq!(warm.n_users(), 8);
        assert_eq!(cold.n_users(), 2);
        assert_eq!(warm.n_ratings() + cold.n_ratings(), table.n_ratings());
    }

    #[test]
    fn split_five_users_proportional_floor() {
        let table = table_with_users(5);
        let (warm, cold) = split_users(&table, (4, 1), 7).unwrap();
        assert_eq!(warm.n_users(), 4);
        assert_eq!(cold.n_users(), 1);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let table = table_with_users(12);
        let (w1, c1) = split_users(&table, (4, 1), 99).unwrap();
        let (w2, c2) = split_users(&table, (4, 1), 99).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(c1, c2);
        let (w3, _) = split_users(&table, (4, 1), 100).unwrap();
        assert_ne!(w1.user_ids(), w3.user_ids());
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let table = table_with_users(1);
        assert!(split_users(&table, (4, 1), 0).is_err());
        let table = table_with_users(2);
        assert!(split_users(&table, (4, 0), 0).is_err());
        // 2 users at 1:9 would leave the warm side empty.
        assert!(split_users(&table, (1, 9), 0).is_err());
        assert!(split_users(&table, (1, 1), 0).is_ok());
    }

    #[test]
    fn from_parts_allows_zero_rating_users() {
        let table = RatingsTable::from_parts(
            vec!["u0".into(), "u1".into()],
            vec!["i0".into()],
            vec![(0, 0, 4.0)],
        )
        .unwrap();
        assert_eq!(table.n_users(), 2);
        assert_eq!(table.by_user()[1].len(), 0);
    }
}
