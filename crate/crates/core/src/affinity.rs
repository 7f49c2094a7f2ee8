//! Click distributions, gap ratios and publisher/article-to-location
//! affinity.
//!
//! A subject's clicks are aggregated per city, cities at or below the click
//! floor are dropped, and the remaining counts are normalized into shares.
//! The gap ratio of a city is `(x - x_max) / x_max` where `x_max` is the
//! largest share; it is never positive, so a city is selected when the
//! magnitude of its gap is below the threshold. A publisher whose selected
//! cities all sit in one state (and are fewer than the city cap) is strongly
//! local; one whose selected cities span more than two states is strongly
//! non-local; everything else is ambiguous.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClickRecord, Segment, Subject};
use crate::scalar::Scalar;

pub const DEFAULT_MIN_CLICKS: u64 = 50;
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.25;
pub const DEFAULT_MAX_LOCAL_CITIES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AffinityError {
    #[error("no distribution: no city passed the click floor")]
    NoDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams<T> {
    pub min_clicks: u64,
    pub gap_threshold: T,
    pub max_local_cities: usize,
}

impl<T: Scalar> Default for AffinityParams<T> {
    fn default() -> Self {
        AffinityParams {
            min_clicks: DEFAULT_MIN_CLICKS,
            gap_threshold: T::of(DEFAULT_GAP_THRESHOLD),
            max_local_cities: DEFAULT_MAX_LOCAL_CITIES,
        }
    }
}

/// City identity: normalized name plus state. No geocoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CityKey {
    pub city: String,
    pub state: String,
}

impl CityKey {
    pub fn new(city: &str, state: &str) -> CityKey {
        CityKey {
            city: crate::text::normalize(city),
            state: state.trim().to_ascii_uppercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityShare<T> {
    pub city: String,
    pub state: String,
    pub clicks: u64,
    pub share: T,
}

impl<T> CityShare<T> {
    pub fn key(&self) -> CityKey {
        CityKey {
            city: self.city.clone(),
            state: self.state.clone(),
        }
    }
}

/// Rows are ordered by clicks (descending), then city key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityDistribution<T> {
    pub subject: Subject,
    pub rows: Vec<CityShare<T>>,
}

impl<T: Scalar> CityDistribution<T> {
    /// Builds a distribution from already-filtered per-city counts.
    pub fn from_counts(subject: Subject, counts: BTreeMap<CityKey, u64>) -> CityDistribution<T> {
        let total: u64 = counts.values().sum();
        let mut rows: Vec<CityShare<T>> = counts
            .into_iter()
            .map(|(k, clicks)| CityShare {
                city: k.city,
                state: k.state,
                clicks,
                share: T::of_u64(clicks) / T::of_u64(total),
            })
            .collect();
        rows.sort_by(|a, b| b.clicks.cmp(&a.clicks).then_with(|| (&a.city, &a.state).cmp(&(&b.city, &b.state))));
        CityDistribution { subject, rows }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_clicks(&self) -> u64 {
        self.rows.iter().map(|r| r.clicks).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityGap<T> {
    pub city: String,
    pub state: String,
    pub gap: T,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRatioResult<T> {
    pub threshold: T,
    pub rows: Vec<CityGap<T>>,
}

impl<T: Scalar> GapRatioResult<T> {
    pub fn selected(&self) -> Vec<CityKey> {
        self.rows
            .iter()
            .filter(|r| r.selected)
            .map(|r| CityKey {
                city: r.city.clone(),
                state: r.state.clone(),
            })
            .collect()
    }
}

/// Aggregates `subject`'s clicks per city and keeps cities with strictly more
/// than `min_clicks`. Empty when no city survives.
pub fn city_distribution<T: Scalar>(clicks: &[ClickRecord], subject: &Subject, min_clicks: u64) -> CityDistribution<T> {
    let mut counts: BTreeMap<CityKey, u64> = BTreeMap::new();
    for r in clicks.iter().filter(|r| &r.subject == subject) {
        let slot = counts.entry(CityKey::new(&r.city, &r.state)).or_insert(0);
        *slot = slot.saturating_add(r.clicks);
    }
    counts.retain(|_, c| *c > min_clicks);
    CityDistribution::from_counts(subject.clone(), counts)
}

/// Gap of each city against the maximum-share city.
///
/// Shares are proportional to click counts, so the ratio is evaluated on the
/// counts themselves; this keeps exact ties (for example a city at exactly
/// three quarters of the leader) on the correct side of the threshold.
pub fn gap_ratios<T: Scalar>(dist: &CityDistribution<T>, threshold: T) -> Result<GapRatioResult<T>, AffinityError> {
    let max = dist.rows.iter().map(|r| r.clicks).max().ok_or(AffinityError::NoDistribution)?;
    if max == 0 {
        return Err(AffinityError::NoDistribution);
    }
    let max_t = T::of_u64(max);
    let rows = dist
        .rows
        .iter()
        .map(|r| {
            let gap = (T::of_u64(r.clicks) - max_t) / max_t;
            CityGap {
                city: r.city.clone(),
                state: r.state.clone(),
                gap,
                selected: gap.abs() < threshold,
            }
        })
        .collect();
    Ok(GapRatioResult { threshold, rows })
}

/// Segment of a set of selected cities. Duplicates and order are ignored.
pub fn classify_publisher(selected: &[CityKey], max_local_cities: usize) -> Segment {
    let cities: BTreeSet<&CityKey> = selected.iter().collect();
    let states: BTreeSet<&str> = cities.iter().map(|k| k.state.as_str()).collect();
    if states.len() == 1 && cities.len() < max_local_cities {
        Segment::StrongLocal
    } else if states.len() > 2 {
        Segment::StrongNonLocal
    } else {
        Segment::Ambiguous
    }
}

/// One `affinity.jsonl` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherAffinity<T> {
    pub publisher: String,
    pub distribution: CityDistribution<T>,
    pub gaps: Option<GapRatioResult<T>>,
    pub selected_cities: Vec<CityKey>,
    pub segment: Segment,
    pub insufficient_data: bool,
}

pub fn publisher_affinity<T: Scalar>(
    clicks: &[ClickRecord],
    publisher: &str,
    params: &AffinityParams<T>,
) -> PublisherAffinity<T> {
    let subject = Subject::Publisher(publisher.to_string());
    let distribution = city_distribution(clicks, &subject, params.min_clicks);
    let gaps = gap_ratios(&distribution, params.gap_threshold).ok();
    let selected_cities = gaps.as_ref().map(GapRatioResult::selected).unwrap_or_default();
    let insufficient_data = selected_cities.is_empty();
    let segment = if insufficient_data {
        Segment::Ambiguous
    } else {
        classify_publisher(&selected_cities, params.max_local_cities)
    };
    PublisherAffinity {
        publisher: publisher.to_string(),
        distribution,
        gaps,
        selected_cities,
        segment,
        insufficient_data,
    }
}

/// Affinity for every publisher named in `publishers` or in the click log,
/// sorted by publisher id.
pub fn all_publisher_affinities<'a, T: Scalar>(
    clicks: &[ClickRecord],
    publishers: impl IntoIterator<Item = &'a str>,
    params: &AffinityParams<T>,
) -> Vec<PublisherAffinity<T>> {
    let mut ids: BTreeSet<String> = publishers.into_iter().map(String::from).collect();
    for r in clicks {
        if let Subject::Publisher(p) = &r.subject {
            ids.insert(p.clone());
        }
    }
    let mut by_publisher: BTreeMap<&str, Vec<ClickRecord>> = BTreeMap::new();
    for r in clicks {
        if let Subject::Publisher(p) = &r.subject {
            by_publisher.entry(p.as_str()).or_default().push(r.clone());
        }
    }
    ids.iter()
        .map(|p| publisher_affinity(by_publisher.get(p.as_str()).map_or(&[][..], Vec::as_slice), p, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArticleAffinity {
    Local { city: String, state: String },
    NonLocal,
    Unknown,
}

/// Publisher rules applied to one article's own clicks. A local verdict names
/// the article's top city.
pub fn article_affinity<T: Scalar>(clicks: &[ClickRecord], article_id: &str, params: &AffinityParams<T>) -> ArticleAffinity {
    let subject = Subject::Article(article_id.to_string());
    let dist = city_distribution::<T>(clicks, &subject, params.min_clicks);
    let Ok(gaps) = gap_ratios(&dist, params.gap_threshold) else {
        return ArticleAffinity::Unknown;
    };
    let selected = gaps.selected();
    match classify_publisher(&selected, params.max_local_cities) {
        Segment::StrongLocal => {
            let top = &dist.rows[0];
            ArticleAffinity::Local {
                city: top.city.clone(),
                state: top.state.clone(),
            }
        }
        Segment::StrongNonLocal => ArticleAffinity::NonLocal,
        Segment::Ambiguous => ArticleAffinity::Unknown,
    }
}
