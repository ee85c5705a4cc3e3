//! Wikidata query construction for state/gender image retrieval.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MALE_QID: &str = "Q6581097";
pub const FEMALE_QID: &str = "Q6581072";
pub const DEFAULT_ENDPOINT: &str = "https://query.wikidata.org/sparql";

const TEMPLATE: &str = "SELECT DISTINCT ?person ?personLabel
?image WHERE {
  ?person wdt:P31 wd:Q5;
           wdt:P21 wd:{GENDER};
           wdt:P18 ?image.
  {
    ?person wdt:P19|wdt:P551|wdt:P937
    ?loc.
    ?loc wdt:P131* wd:{STATE}.
  }
  UNION
  {
    ?person wdt:P69 ?inst.
    ?inst wdt:P131* wd:{STATE}.
  }
  UNION
  {
    ?person wdt:P39 ?pos.
    ?pos wdt:P768 ?const.
    ?const wdt:P131* wd:{STATE}.
  }
}
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlRequest {
    pub state_qid: String,
    pub gender_qid: String,
}

fn check_qid(q: &str) -> Result<()> {
    let digits = q.strip_prefix('Q').unwrap_or("");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::InvalidQid(q.to_string()));
    }
    Ok(())
}

impl SparqlRequest {
    pub fn new(state_qid: impl Into<String>, gender_qid: impl Into<String>) -> Result<Self> {
        let r = Self {
            state_qid: state_qid.into(),
            gender_qid: gender_qid.into(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        check_qid(&self.state_qid)?;
        check_qid(&self.gender_qid)
    }
}

/// Humans with an image, of the given gender, linked to the state through
/// birth/residence/work place, an educational institution, or a held
/// position's constituency.
pub fn build_sparql(req: &SparqlRequest) -> Result<String> {
    req.validate()?;
    Ok(TEMPLATE
        .replace("{GENDER}", &req.gender_qid)
        .replace("{STATE}", &req.state_qid))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlHit {
    pub person: String,
    pub label: String,
    pub image: String,
}

#[derive(Deserialize)]
struct Binding {
    value: String,
}

#[derive(Deserialize)]
struct Row {
    person: Option<Binding>,
    #[serde(rename = "personLabel")]
    person_label: Option<Binding>,
    image: Option<Binding>,
}

#[derive(Deserialize)]
struct Results {
    bindings: Vec<Row>,
}

#[derive(Deserialize)]
struct Response {
    results: Results,
}

/// Parses a SPARQL JSON results document. Rows without a person or an image
/// are skipped; a missing label falls back to the person URI.
pub fn parse_results(json: &str) -> Result<Vec<SparqlHit>> {
    let resp: Response = serde_json::from_str(json)?;
    Ok(resp
        .results
        .bindings
        .into_iter()
        .filter_map(|r| {
            let person = r.person?.value;
            let image = r.image?.value;
            let label = r.person_label.map(|b| b.value).unwrap_or_else(|| person.clone());
            Some(SparqlHit { person, label, image })
        })
        .collect())
}

/// Runs the query against a SPARQL endpoint.
#[cfg(feature = "wdqs")]
pub fn fetch(endpoint: &str, req: &SparqlRequest, user_agent: &str) -> Result<Vec<SparqlHit>> {
    let query = build_sparql(req)?;
    let body = reqwest::blocking::Client::builder()
        .user_agent(user_agent)
        .build()?
        .get(endpoint)
        .query(&[("query", query.as_str()), ("format", "json")])
        .header("Accept", "application/sparql-results+json")
        .send()?
        .error_for_status()?
        .text()?;
    parse_results(&body)
}
