//! Car Information System: gas-station recommendations from vehicle data.

mod geo;
mod notify;
mod pipeline;
mod prices;
mod reading;
mod recommend;
mod rtree;

use alloc::string::String;

pub use geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
pub use notify::{
    MemorySink, Notification, NotificationService, NotificationSink, NotifyStats,
    RecommendationMessage,
};
pub use pipeline::{
    build_pipeline, first_appearance, first_appearance_step, fuel_filter, passes_fuel_filter,
    raw_store_output, recommendation_output, station_search, vehicle_receiver, vehicle_source,
    CisServices, CisTopics, RECOMMENDATION_TAG, VEHICLE_TAG,
};
pub use prices::{
    FuelKind, PriceCache, PriceEvent, PriceHistory, PriceLookup, PriceSource, PriceStats,
    StationPrices, StubPriceSource,
};
pub use reading::{parse_percent, parse_vehicle_reading, VehicleReading, ENGINE_RPM, FUEL_LEVEL};
pub use recommend::{
    fill_cost, recommend_counted, recommend_station, NoRecommendation, Reason, RecommendContext,
    Recommendation, RecommenderConfig,
};
pub use rtree::{linear_scan, GasStation, Nearby, StationIndex};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CisError {
    #[error("duplicate station id {0}")]
    DuplicateStationId(String),
    #[error("station {0} not found")]
    StationNotFound(String),
    #[error("no {fuel} price for station {station}")]
    NoPrice { station: String, fuel: FuelKind },
    #[error("no {fuel} price history for station {station}")]
    NoHistory { station: String, fuel: FuelKind },
    #[error("unknown fuel kind {0}")]
    UnknownFuel(String),
    #[error("invalid recommender configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("price service unavailable: {0}")]
    Upstream(String),
}
