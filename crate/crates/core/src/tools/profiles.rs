use std::collections::BTreeMap;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::journal::{self, Journal, JournalError, MemoryJournal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    pub email: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification_threshold_pm2_5: Option<f64>,
}

/// Partial update; `None` leaves a field unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileUpdate {
    pub display_name: Option<String>,
    pub email: Option<String>,
    pub notification_threshold_pm2_5: Option<f64>,
}

impl ProfileUpdate {
    pub fn is_empty(&self) -> bool {
        self.display_name.is_none() && self.email.is_none() && self.notification_threshold_pm2_5.is_none()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("no profile field to update (expected display_name, email or notification_threshold_pm2_5)")]
    NothingToUpdate,
    #[error("email `{0}` is malformed")]
    MalformedEmail(String),
    #[error("display_name must not be empty")]
    EmptyDisplayName,
    #[error("notification_threshold_pm2_5 must be a non-negative number, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

pub fn email_is_well_formed(email: &str) -> bool {
    match email.split_once('@') {
        Some((local, domain)) => {
            !local.is_empty() && !domain.is_empty() && !domain.contains('@') && !email.contains(char::is_whitespace)
        }
        None => false,
    }
}

pub struct ProfileStore {
    profiles: RwLock<BTreeMap<String, UserProfile>>,
    journal: Box<dyn Journal>,
}

impl ProfileStore {
    pub fn in_memory(seed: impl IntoIterator<Item = UserProfile>) -> Self {
        Self::from_parts(seed, Box::new(MemoryJournal::new())).expect("memory journal is empty")
    }

    /// Seed profiles first, then replay journaled updates over them.
    pub fn open(seed: impl IntoIterator<Item = UserProfile>, journal: Box<dyn Journal>) -> Result<Self, JournalError> {
        Self::from_parts(seed, journal)
    }

    fn from_parts(seed: impl IntoIterator<Item = UserProfile>, journal: Box<dyn Journal>) -> Result<Self, JournalError> {
        let mut profiles: BTreeMap<String, UserProfile> =
            seed.into_iter().map(|p| (p.user_id.clone(), p)).collect();
        for p in journal::replay::<UserProfile>(journal.as_ref())? {
            if profiles.contains_key(&p.user_id) {
                profiles.insert(p.user_id.clone(), p);
            }
        }
        Ok(Self {
            profiles: RwLock::new(profiles),
            journal,
        })
    }

    pub fn contains(&self, user: &str) -> bool {
        self.profiles.read().contains_key(user)
    }

    pub fn get(&self, user: &str) -> Option<UserProfile> {
        self.profiles.read().get(user).cloned()
    }

    pub fn update(&self, user: &str, update: &ProfileUpdate) -> Result<UserProfile, ProfileError> {
        if update.is_empty() {
            return Err(ProfileError::NothingToUpdate);
        }
        if let Some(name) = &update.display_name {
            if name.trim().is_empty() {
                return Err(ProfileError::EmptyDisplayName);
            }
        }
        if let Some(email) = &update.email {
            if !email_is_well_formed(email) {
                return Err(ProfileError::MalformedEmail(email.clone()));
            }
        }
        if let Some(t) = update.notification_threshold_pm2_5 {
            if !t.is_finite() || t < 0.0 {
                return Err(ProfileError::BadThreshold(t));
            }
        }
        let mut profiles = self.profiles.write();
        let current = profiles
            .get(user)
            .ok_or_else(|| ProfileError::UnknownUser(user.to_owned()))?;
        let mut next = current.clone();
        if let Some(name) = &update.display_name {
            next.display_name = name.trim().to_owned();
        }
        if let Some(email) = &update.email {
            next.email = email.clone();
        }
        if let Some(t) = update.notification_threshold_pm2_5 {
            next.notification_threshold_pm2_5 = Some(t);
        }
        journal::append_record(self.journal.as_ref(), &next)?;
        profiles.insert(user.to_owned(), next.clone());
        Ok(next)
    }
}
