use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::CaseBaseError;
use crate::preference::{ItemId, TotalOrder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieRecord {
    pub id: ItemId,
    pub title: String,
    pub director: String,
    pub actors: Vec<String>,
    pub genres: Vec<String>,
    pub star_rating: f64,
    pub mpaa: String,
    pub country: String,
    pub runtime_minutes: u32,
    pub year: i32,
}

impl MovieRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(1880..=2100).contains(&self.year) {
            return Err(format!("{}: year {} outside 1880-2100", self.id, self.year));
        }
        if self.runtime_minutes == 0 {
            return Err(format!("{}: runtime must be positive", self.id));
        }
        if !(0.0..=5.0).contains(&self.star_rating) {
            return Err(format!(
                "{}: star rating {} outside 0-5",
                self.id, self.star_rating
            ));
        }
        Ok(())
    }
}

/// Movies in insertion order with an id index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    movies: Vec<MovieRecord>,
    index: HashMap<ItemId, usize>,
}

impl Catalog {
    pub fn new(movies: Vec<MovieRecord>) -> Result<Self, CaseBaseError> {
        let mut index = HashMap::with_capacity(movies.len());
        for (k, m) in movies.iter().enumerate() {
            m.validate().map_err(|reason| CaseBaseError::BadRecord {
                line: k + 1,
                reason,
            })?;
            if index.insert(m.id.clone(), k).is_some() {
                return Err(CaseBaseError::DuplicateMovie(m.id.clone()));
            }
        }
        Ok(Catalog { movies, index })
    }

    pub fn movies(&self) -> &[MovieRecord] {
        &self.movies
    }

    pub fn get(&self, id: &ItemId) -> Option<&MovieRecord> {
        self.index.get(id).map(|&k| &self.movies[k])
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.movies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.movies.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> {
        self.movies.iter().map(|m| &m.id)
    }
}

/// Highest star rating first, ties by id. Used when no case base exists.
pub fn fallback_ranking(catalog: &Catalog) -> TotalOrder {
    let mut movies: Vec<&MovieRecord> = catalog.movies().iter().collect();
    movies.sort_by(|a, b| {
        b.star_rating
            .total_cmp(&a.star_rating)
            .then_with(|| a.id.cmp(&b.id))
    });
    TotalOrder::new(movies.into_iter().map(|m| m.id.clone()).collect())
        .expect("catalog ids are unique")
}

const MOVIES_HEADER: [&str; 10] = [
    "id",
    "title",
    "director",
    "actors",
    "genres",
    "star_rating",
    "mpaa",
    "country",
    "runtime_minutes",
    "year",
];

#[derive(Serialize, Deserialize)]
struct MovieRow {
    id: String,
    title: String,
    director: String,
    actors: String,
    genres: String,
    star_rating: f64,
    mpaa: String,
    country: String,
    runtime_minutes: u32,
    year: i32,
}

fn split_multi(s: &str) -> Vec<String> {
    s.split('|')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

pub fn read_movies_csv<R: Read>(reader: R) -> Result<Catalog, CaseBaseError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(MOVIES_HEADER) {
        return Err(CaseBaseError::BadHeader {
            expected: MOVIES_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut movies = Vec::new();
    for row in rdr.deserialize::<MovieRow>() {
        let row = row.map_err(|e| CaseBaseError::BadRecord {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        movies.push(MovieRecord {
            id: ItemId::new(row.id.trim())?,
            title: row.title,
            director: row.director,
            actors: split_multi(&row.actors),
            genres: split_multi(&row.genres),
            star_rating: row.star_rating,
            mpaa: row.mpaa,
            country: row.country,
            runtime_minutes: row.runtime_minutes,
            year: row.year,
        });
    }
    Catalog::new(movies)
}

pub fn write_movies_csv<W: Write>(w: W, catalog: &Catalog) -> Result<(), CaseBaseError> {
    let mut wtr = csv::Writer::from_writer(w);
    for m in catalog.movies() {
        wtr.serialize(MovieRow {
            id: m.id.to_string(),
            title: m.title.clone(),
            director: m.director.clone(),
            actors: m.actors.join("|"),
            genres: m.genres.join("|"),
            star_rating: m.star_rating,
            mpaa: m.mpaa.clone(),
            country: m.country.clone(),
            runtime_minutes: m.runtime_minutes,
            year: m.year,
        })?;
    }
    wtr.flush()?;
    Ok(())
}
