//! Records, schemas, and the key encodings derived from them.

use crate::error::{Error, Result};
use crate::types::PrimaryKey;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(String),
    Bytes(Vec<u8>),
}

impl Value {
    /// Order-preserving byte encoding used as a secondary key.
    pub fn key_bytes(&self) -> Vec<u8> {
        match self {
            Value::Int(v) => ((*v as u64) ^ (1 << 63)).to_be_bytes().to_vec(),
            Value::Str(s) => s.as_bytes().to_vec(),
            Value::Bytes(b) => b.clone(),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn field_type(&self) -> FieldType {
        match self {
            Value::Int(_) => FieldType::Int,
            Value::Str(_) => FieldType::Str,
            Value::Bytes(_) => FieldType::Bytes,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldType {
    Int,
    Str,
    Bytes,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDef {
    pub name: String,
    pub ty: FieldType,
}

/// Describes the non-key fields of a dataset, which of them are indexed, and
/// which one drives the primary index's range filter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSchema {
    pub fields: Vec<FieldDef>,
    /// Field position for each secondary index.
    pub secondary_keys: Vec<usize>,
    /// Int field whose min/max is kept per primary component.
    pub filter_key: Option<usize>,
}

impl DatasetSchema {
    pub fn new(fields: Vec<(&str, FieldType)>) -> Self {
        DatasetSchema {
            fields: fields
                .into_iter()
                .map(|(n, ty)| FieldDef {
                    name: n.to_string(),
                    ty,
                })
                .collect(),
            secondary_keys: Vec::new(),
            filter_key: None,
        }
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown field `{name}`")))
    }

    pub fn with_secondary(mut self, name: &str) -> Result<Self> {
        let i = self.field_index(name)?;
        self.secondary_keys.push(i);
        Ok(self)
    }

    pub fn with_filter(mut self, name: &str) -> Result<Self> {
        let i = self.field_index(name)?;
        if self.fields[i].ty != FieldType::Int {
            return Err(Error::Schema(format!("filter field `{name}` must be an Int")));
        }
        self.filter_key = Some(i);
        Ok(self)
    }

    /// UserLocation(UserID, Location, Time) with a secondary index on
    /// Location and a range filter on Time.
    pub fn user_location() -> Self {
        DatasetSchema::new(vec![("location", FieldType::Str), ("time", FieldType::Int)])
            .with_secondary("location")
            .and_then(|s| s.with_filter("time"))
            .expect("static schema")
    }

    /// Synthetic tweets: secondary index on user_id, filter on creation_time.
    pub fn tweets() -> Self {
        DatasetSchema::new(vec![
            ("user_id", FieldType::Int),
            ("creation_time", FieldType::Int),
            ("message_text", FieldType::Bytes),
        ])
        .with_secondary("user_id")
        .and_then(|s| s.with_filter("creation_time"))
        .expect("static schema")
    }

    pub fn validate(&self, rec: &Record) -> Result<()> {
        if rec.fields.len() != self.fields.len() {
            return Err(Error::Schema(format!(
                "record {} has {} fields, schema has {}",
                rec.key,
                rec.fields.len(),
                self.fields.len()
            )));
        }
        for (v, def) in rec.fields.iter().zip(&self.fields) {
            if v.field_type() != def.ty {
                return Err(Error::Schema(format!(
                    "field `{}` of record {} is {:?}, expected {:?}",
                    def.name,
                    rec.key,
                    v.field_type(),
                    def.ty
                )));
            }
        }
        Ok(())
    }

    pub fn extract_filter_key(&self, rec: &Record) -> Result<Option<i64>> {
        match self.filter_key {
            None => Ok(None),
            Some(i) => rec
                .fields
                .get(i)
                .and_then(Value::as_int)
                .map(Some)
                .ok_or_else(|| Error::Schema(format!("record {} lacks the filter field", rec.key))),
        }
    }

    pub fn secondary_key(&self, index: usize, rec: &Record) -> Vec<u8> {
        rec.fields[self.secondary_keys[index]].key_bytes()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub key: PrimaryKey,
    pub fields: Vec<Value>,
}

impl Record {
    pub fn new(key: impl Into<PrimaryKey>, fields: Vec<Value>) -> Self {
        Record {
            key: key.into(),
            fields,
        }
    }

    /// Payload bytes stored in the primary index (the key is not repeated).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.fields.len() as u16).to_le_bytes());
        for v in &self.fields {
            match v {
                Value::Int(i) => {
                    out.push(0);
                    out.extend_from_slice(&i.to_le_bytes());
                }
                Value::Str(s) => {
                    out.push(1);
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
                Value::Bytes(b) => {
                    out.push(2);
                    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
                    out.extend_from_slice(b);
                }
            }
        }
        out
    }

    pub fn decode(key: PrimaryKey, bytes: &[u8]) -> Result<Record> {
        let bad = || Error::Schema(format!("undecodable payload for record {key}"));
        let mut r = crate::component::format::Reader::new(bytes);
        let n = u16::from_le_bytes(r.bytes(2).ok_or_else(bad)?.try_into().unwrap());
        let mut fields = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let v = match r.u8().ok_or_else(bad)? {
                0 => Value::Int(r.i64().ok_or_else(bad)?),
                1 => {
                    let len = r.u32().ok_or_else(bad)? as usize;
                    let s = r.bytes(len).ok_or_else(bad)?;
                    Value::Str(String::from_utf8(s.to_vec()).map_err(|_| bad())?)
                }
                2 => {
                    let len = r.u32().ok_or_else(bad)? as usize;
                    Value::Bytes(r.bytes(len).ok_or_else(bad)?.to_vec())
                }
                _ => return Err(bad()),
            };
            fields.push(v);
        }
        Ok(Record { key, fields })
    }

    /// Encoded size, the unit charged against memory budgets.
    pub fn encoded_len(&self) -> usize {
        2 + self
            .fields
            .iter()
            .map(|v| match v {
                Value::Int(_) => 9,
                Value::Str(s) => 5 + s.len(),
                Value::Bytes(b) => 5 + b.len(),
            })
            .sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn running_example_filter_key() {
        let schema = DatasetSchema::user_location();
        let r = Record::new(101, vec!["CA".into(), 2015.into()]);
        schema.validate(&r).unwrap();
        assert_eq!(schema.extract_filter_key(&r).unwrap(), Some(2015));
        assert_eq!(schema.secondary_key(0, &r), b"CA".to_vec());
    }

    #[test]
    fn no_filter_configured_is_a_no_op() {
        let schema = DatasetSchema::new(vec![("location", FieldType::Str)]);
        let r = Record::new(1, vec!["CA".into()]);
        assert_eq!(schema.extract_filter_key(&r).unwrap(), None);
    }

    #[test]
    fn schema_violations_are_reported() {
        let schema = DatasetSchema::user_location();
        let r = Record::new(1, vec![2015.into(), "CA".into()]);
        assert!(matches!(schema.validate(&r), Err(Error::Schema(_))));
        let r = Record::new(1, vec!["CA".into()]);
        assert!(matches!(schema.validate(&r), Err(Error::Schema(_))));
        assert!(schema.clone().with_filter("location").is_err());
    }

    proptest! {
        #[test]
        fn int_key_bytes_preserve_order(a in any::<i64>(), b in any::<i64>()) {
            prop_assert_eq!(a.cmp(&b), Value::Int(a).key_bytes().cmp(&Value::Int(b).key_bytes()));
        }

        #[test]
        fn payload_roundtrip(i in any::<i64>(), s in ".{0,20}", b in proptest::collection::vec(any::<u8>(), 0..50)) {
            let r = Record::new(7, vec![Value::Int(i), Value::Str(s), Value::Bytes(b)]);
            let enc = r.encode();
            prop_assert_eq!(enc.len(), r.encoded_len());
            prop_assert_eq!(Record::decode(PrimaryKey(7), &enc).unwrap(), r);
        }
    }
}
