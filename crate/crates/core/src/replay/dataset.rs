//! Login datasets with pre-derived sub-features.
//!
//! Values are taken as they appear in the file: no address resolution and no
//! user-agent parsing happens here. The only transformation is rounding an
//! RTT column to ten milliseconds.

use std::collections::HashMap;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::features::normalize_rtt;
use crate::model::{DeviceType, NormalizedFeatures, UserId};

/// Which CSV header holds which field. Defaults follow the headers of the
/// public RBA login dataset. `index`, `timestamp`, `login_successful` and
/// `rtt` may be set to an empty string to mark them as absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub index: String,
    pub timestamp: String,
    pub user_id: String,
    pub ip: String,
    pub asn: String,
    pub country: String,
    pub ua: String,
    pub browser: String,
    pub os: String,
    pub device_type: String,
    pub login_successful: String,
    pub rtt: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            index: "index".into(),
            timestamp: "Login Timestamp".into(),
            user_id: "User ID".into(),
            ip: "IP Address".into(),
            asn: "ASN".into(),
            country: "Country".into(),
            ua: "User Agent String".into(),
            browser: "Browser Name and Version".into(),
            os: "OS Name and Version".into(),
            device_type: "Device Type".into(),
            login_successful: "Login Successful".into(),
            rtt: "Round-Trip Time [ms]".into(),
        }
    }
}

impl ColumnMapping {
    pub fn from_toml_str(text: &str) -> Result<Self, DatasetError> {
        toml::from_str(text).map_err(|e| DatasetError::Mapping(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub global_index: u64,
    pub user: UserId,
    pub timestamp: String,
    pub features: NormalizedFeatures,
    pub login_successful: bool,
}

struct Columns {
    index: Option<usize>,
    timestamp: Option<usize>,
    user_id: usize,
    ip: usize,
    asn: usize,
    country: usize,
    ua: usize,
    browser: usize,
    os: usize,
    device_type: usize,
    login_successful: Option<usize>,
    rtt: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<Self, DatasetError> {
        let positions: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let required = |name: &str| {
            positions.get(name).copied().ok_or_else(|| DatasetError::MissingColumn(name.to_owned()))
        };
        // An optional column that is mapped must still exist.
        let optional = |name: &str| if name.is_empty() { Ok(None) } else { required(name).map(Some) };
        Ok(Columns {
            index: if positions.contains_key(mapping.index.as_str()) { optional(&mapping.index)? } else { None },
            timestamp: optional(&mapping.timestamp)?,
            user_id: required(&mapping.user_id)?,
            ip: required(&mapping.ip)?,
            asn: required(&mapping.asn)?,
            country: required(&mapping.country)?,
            ua: required(&mapping.ua)?,
            browser: required(&mapping.browser)?,
            os: required(&mapping.os)?,
            device_type: required(&mapping.device_type)?,
            login_successful: optional(&mapping.login_successful)?,
            rtt: optional(&mapping.rtt)?,
        })
    }
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty() && s != "-").then(|| s.to_owned())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Reads every row in file order, failed logins included.
pub fn read_dataset<R: std::io::Read>(reader: R, mapping: &ColumnMapping) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let columns = Columns::resolve(csv.headers()?, mapping)?;
    let mut rows = Vec::new();
    for (position, record) in csv.records().enumerate() {
        let row_no = position + 1;
        let record = record.map_err(|e| DatasetError::Row { row: row_no, message: e.to_string() })?;
        let bad = |message: String| DatasetError::Row { row: row_no, message };
        let field = |i: usize| record.get(i).unwrap_or("");

        let global_index = match columns.index {
            Some(i) => field(i).trim().parse().map_err(|_| bad(format!("index {:?} is not a number", field(i))))?,
            None => position as u64,
        };
        let ip: IpAddr = field(columns.ip)
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid IP address {:?}", field(columns.ip))))?;
        let asn = match non_empty(field(columns.asn)) {
            None => None,
            Some(a) => {
                let digits = a.strip_prefix("AS").unwrap_or(&a);
                Some(digits.parse::<u32>().map_err(|_| bad(format!("ASN {a:?} is not a number")))?)
            }
        };
        let rtt_ms = match columns.rtt.and_then(|i| non_empty(field(i))) {
            None => None,
            Some(v) => {
                let ms: f64 = v.parse().map_err(|_| bad(format!("RTT {v:?} is not a number")))?;
                normalize_rtt(&[ms]).map_err(|e| bad(e.to_string()))?
            }
        };
        let login_successful = match columns.login_successful {
            None => true,
            Some(i) => parse_bool(field(i)).ok_or_else(|| bad(format!("login flag {:?} is not a boolean", field(i))))?,
        };
        let user = non_empty(field(columns.user_id)).ok_or_else(|| bad("empty user id".into()))?;
        rows.push(DatasetRow {
            global_index,
            user: UserId::from(user),
            timestamp: columns.timestamp.map(|i| field(i).to_owned()).unwrap_or_default(),
            features: NormalizedFeatures {
                ip,
                asn,
                country: non_empty(field(columns.country)),
                ua_full: field(columns.ua).to_owned(),
                browser: non_empty(field(columns.browser)),
                os: non_empty(field(columns.os)),
                device_type: DeviceType::from_label(field(columns.device_type)),
                rtt_ms,
            },
            login_successful,
        });
    }
    Ok(rows)
}

pub fn load_dataset(path: &Path, mapping: &ColumnMapping) -> Result<Vec<DatasetRow>, DatasetError> {
    read_dataset(std::fs::File::open(path)?, mapping)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "index,Login Timestamp,User ID,Round-Trip Time [ms],IP Address,Country,Region,City,ASN,User Agent String,Browser Name and Version,OS Name and Version,Device Type,Login Successful,Is Attack IP,Is Account Takeover";

    fn sample() -> String {
        format!(
            "{HEADER}\n\
             0,2020-02-03 12:43:30.772,-4324475583306591935,,10.0.65.171,NO,-,-,29695,Mozilla/5.0 (iPhone; CPU iPhone OS 13_4 like Mac OS X),Firefox 20.0.0.1618,iOS 13.4,mobile,False,False,False\n\
             1,2020-02-03 12:43:43.549,-4324475583306591935,,194.87.207.6,AU,-,-,60117,Mozilla/5.0 (Linux; Android 4.1),Chrome Mobile 46.0.2490,Android 4.1,mobile,True,False,False\n\
             2,2020-02-03 12:43:55.873,-3284137479262433373,568.0,81.167.144.58,NO,Vestland,Urangsvag,29695,\"Mozilla/5.0 (iPad; CPU OS 7_1 like Mac OS X), quoted\",Android 2.3.3.2660,Android 4.4.2,mobile,True,False,False\n"
        )
    }

    #[test]
    fn reads_public_layout() {
        let rows = read_dataset(sample().as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(!rows[0].login_successful);
        assert_eq!(rows[1].user.as_str(), "-4324475583306591935");
        assert_eq!(rows[1].features.asn, Some(60117));
        assert_eq!(rows[1].features.browser.as_deref(), Some("Chrome Mobile 46.0.2490"));
        assert_eq!(rows[2].features.rtt_ms, Some(570));
        assert_eq!(rows[2].features.ua_full, "Mozilla/5.0 (iPad; CPU OS 7_1 like Mac OS X), quoted");
        assert_eq!(rows[2].global_index, 2);
        assert_eq!(rows[0].features.rtt_ms, None);
    }

    #[test]
    fn missing_column_is_named() {
        let mapping = ColumnMapping { user_id: "Account".into(), ..ColumnMapping::default() };
        match read_dataset(sample().as_bytes(), &mapping) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "Account"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_row_reports_number() {
        let text = sample().replace("194.87.207.6", "not-an-ip");
        match read_dataset(text.as_bytes(), &ColumnMapping::default()) {
            Err(DatasetError::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_mapping_without_optional_columns() {
        let text = "user,ip,asn,cc,ua,br,os,dev\nu1,192.0.2.1,,DE,ua,,,\n";
        let mapping = ColumnMapping::from_toml_str(
            "index = \"\"\ntimestamp = \"\"\nuser_id = \"user\"\nip = \"ip\"\nasn = \"asn\"\ncountry = \"cc\"\nua = \"ua\"\nbrowser = \"br\"\nos = \"os\"\ndevice_type = \"dev\"\nlogin_successful = \"\"\nrtt = \"\"\n",
        )
        .unwrap();
        let rows = read_dataset(text.as_bytes(), &mapping).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].login_successful);
        assert_eq!(rows[0].features.asn, None);
        assert_eq!(rows[0].features.device_type, DeviceType::Unknown);
        assert_eq!(rows[0].global_index, 0);
    }
}
