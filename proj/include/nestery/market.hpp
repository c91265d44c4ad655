#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nestery/node.hpp"

namespace nestery::market {

// Fixed-point currency with four fractional digits.
struct Money {
  std::int64_t ticks = 0;  // 1/10000 of a unit

  static constexpr std::int64_t kScale = 10000;
  static Money from_double(double v);  // rounds to the nearest tick
  static Money parse(std::string_view text);  // "12", "0.1", "-3.2500"; throws InvalidArgument
  double to_double() const { return static_cast<double>(ticks) / kScale; }
  std::string to_string() const;  // always four digits: "0.1000"

  friend auto operator<=>(const Money&, const Money&) = default;
  friend Money operator+(Money a, Money b) { return {a.ticks + b.ticks}; }
  friend Money operator-(Money a, Money b) { return {a.ticks - b.ticks}; }
  friend Money operator*(Money a, std::int64_t n) { return {a.ticks * n}; }
};

// Prices and amounts are JSON numbers on output; input accepts numbers or
// decimal strings.
Money money_from_json(const nlohmann::json& j, const char* field);

enum class OfferKind { Compute, Storage };
std::string_view offer_kind_name(OfferKind k);
OfferKind parse_offer_kind(std::string_view s);  // throws InvalidArgument

inline constexpr double kSpotAlpha = 0.5;
inline constexpr double kSpotTarget = 0.8;
inline constexpr Seconds kBillingPeriod = 3600;
inline constexpr char kOperatorId[] = "operator";

struct ServiceOffer {
  std::int64_t offer_id = 0;
  OfferKind kind = OfferKind::Compute;
  std::string provider_id;
  std::string backing_host;  // "l0" for the operator, else an L1 VM's hex uuid
  ResourceVector spec;       // compute offers
  std::int64_t size_gib = 0; // storage offers
  Money current_price;
  Money floor_price;
  Money cap_price;
  std::map<std::string, std::string> quality;
  bool listed = true;  // an offer is one slice; it is off the board while contracted
};

enum class ContractState { Negotiating, Active, Terminated };
std::string_view contract_state_name(ContractState s);

struct Contract {
  std::int64_t contract_id = 0;
  std::string consumer_id;
  std::int64_t offer_id = 0;
  ContractState state = ContractState::Negotiating;
  std::optional<Uuid> vm;
  std::optional<std::int64_t> volume_id;
  Money agreed_price;
  Seconds started_at = 0;
  Seconds billed_until = 0;
  std::optional<Seconds> ended_at;
  std::int64_t command_seq = 0;
};

struct PricePoint {
  std::int64_t offer_id = 0;
  Seconds timestamp = 0;
  Money price;
};

struct ProviderProfile {
  std::string company_name;
  std::string tax_number;
  std::optional<std::string> bank_account;
  std::optional<std::string> postal_address;

  void validate() const;  // throws IncompleteProfile(field)
};

struct IncomeEvent {
  Seconds timestamp = 0;
  Money amount;
  std::int64_t contract_id = 0;
};

struct UserAccount {
  std::string user_id;
  bool provider = false;
  std::optional<ProviderProfile> profile;
  std::set<std::string> backing_hosts;
  Money purchase_cost;
  std::vector<IncomeEvent> income;
};

struct LedgerReport {
  std::string user_id;
  Money purchase_cost;
  Money cumulative_income;
  Money net;
  bool offset_achieved = false;
};

struct OfferRequest {
  OfferKind kind = OfferKind::Compute;
  ResourceVector spec;
  std::int64_t size_gib = 0;
  Money floor_price;
  Money cap_price;
  Money initial_price;
  std::map<std::string, std::string> quality;
  std::string backing_host;  // empty: the provider's first backing host
};

struct OfferFilter {
  std::optional<OfferKind> kind;
  std::optional<Money> max_price;
  std::optional<ResourceVector> min_spec;
  bool include_delisted = false;
};

enum class ControlAction { Start, Stop, Rescale, Status };
ControlAction parse_control_action(std::string_view s);  // throws InvalidArgument

// p' = clamp(floor, cap, p·(1 + α·(u − u*))), rounded to the nearest tick.
Money spot_price(Money current, Money floor, Money cap, double utilization);

// The resale marketplace. Offers, contracts and ledgers live here; the
// allocations behind contracts are ordinary VMs and volumes on the node.
// Mutations are serialized by one lock, which also settles races for the
// same slice. With a state file, every mutation is persisted before the
// call returns.
class Market {
 public:
  Market(Node& node, std::filesystem::path state_file = {});

  // Registers a consumer account if it does not exist yet.
  void ensure_user(const std::string& user_id);
  bool has_user(const std::string& user_id) const;

  ServiceOffer register_offer(const std::string& provider_id, const OfferRequest& request);
  std::vector<ServiceOffer> list_offers(const OfferFilter& filter = {}) const;
  ServiceOffer offer(std::int64_t offer_id) const;

  // Without an explicit utilization, uses the backing host's core
  // utilization.
  PricePoint update_spot_price(std::int64_t offer_id, std::optional<double> utilization = std::nullopt);
  std::vector<PricePoint> price_history(std::int64_t offer_id, std::optional<Seconds> from = std::nullopt,
                                        std::optional<Seconds> to = std::nullopt) const;

  Contract negotiate_contract(const std::string& consumer_id, std::int64_t offer_id);
  CommandResult control_allocation(std::int64_t contract_id, const std::string& caller, ControlAction action,
                                   std::optional<ResourceVector> resources = std::nullopt,
                                   const std::string& request_key = {});
  Contract terminate_contract(std::int64_t contract_id, const std::string& caller);
  Contract contract(std::int64_t contract_id) const;
  std::vector<Contract> contracts() const;

  void become_provider(const std::string& user_id, const ProviderProfile& profile, const Uuid& backing_vm);
  LedgerReport ledger_report(const std::string& user_id) const;
  UserAccount user(const std::string& user_id) const;

  // Bills every completed hour of every ACTIVE contract up to the node's
  // current time. Called by every operation; exposed for clock ticks.
  void accrue();

  nlohmann::json to_json() const;

 private:
  void accrue_locked(Seconds now);
  void load();
  void save() const;
  UserAccount& account(const std::string& user_id);
  const UserAccount& account(const std::string& user_id) const;
  ServiceOffer& offer_ref(std::int64_t offer_id);
  Contract& contract_ref(std::int64_t contract_id);

  Node& node_;
  std::filesystem::path state_file_;
  mutable std::mutex mu_;
  std::map<std::string, UserAccount> users_;
  std::map<std::int64_t, ServiceOffer> offers_;
  std::map<std::int64_t, Contract> contracts_;
  std::vector<PricePoint> prices_;
  std::int64_t next_offer_id_ = 1;
  std::int64_t next_contract_id_ = 1;
};

nlohmann::json offer_to_json(const ServiceOffer& o);
nlohmann::json contract_to_json(const Contract& c);
nlohmann::json price_point_to_json(const PricePoint& p);
nlohmann::json ledger_to_json(const LedgerReport& r);
OfferRequest offer_request_from_json(const nlohmann::json& j);  // throws InvalidArgument
ProviderProfile profile_from_json(const nlohmann::json& j);

// VM uuid used for the allocation behind a compute contract.
Uuid contract_vm_uuid(std::int64_t contract_id);

}  // namespace nestery::market
