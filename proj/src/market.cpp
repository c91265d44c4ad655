#include "nestery/market.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nestery/error.hpp"

namespace nestery::market {

Money Money::from_double(double v) { return Money{std::llround(v * kScale)}; }

Money Money::parse(std::string_view text) {
  auto bad = [&] { return Error(ErrorCode::InvalidArgument, "money '" + std::string(text) + "'"); };
  std::string_view s = text;
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  auto dot = s.find('.');
  std::string_view whole = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() || frac.size() > 4 || (dot != std::string_view::npos && frac.empty())) throw bad();
  std::int64_t w = 0;
  auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), w);
  if (ec != std::errc() || p != whole.data() + whole.size()) throw bad();
  std::int64_t f = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    int digit = 0;
    if (i < frac.size()) {
      if (frac[i] < '0' || frac[i] > '9') throw bad();
      digit = frac[i] - '0';
    }
    f = f * 10 + digit;
  }
  std::int64_t ticks = w * kScale + f;
  return Money{negative ? -ticks : ticks};
}

std::string Money::to_string() const {
  std::int64_t a = ticks < 0 ? -ticks : ticks;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%04lld", ticks < 0 ? "-" : "", static_cast<long long>(a / kScale),
                static_cast<long long>(a % kScale));
  return buf;
}

Money money_from_json(const nlohmann::json& j, const char* field) {
  if (j.is_string()) return Money::parse(j.get<std::string>());
  if (j.is_number()) return Money::from_double(j.get<double>());
  throw Error(ErrorCode::InvalidArgument, field);
}

std::string_view offer_kind_name(OfferKind k) { return k == OfferKind::Compute ? "compute" : "storage"; }

OfferKind parse_offer_kind(std::string_view s) {
  if (s == "compute") return OfferKind::Compute;
  if (s == "storage") return OfferKind::Storage;
  throw Error(ErrorCode::InvalidArgument, "kind");
}

std::string_view contract_state_name(ContractState s) {
  switch (s) {
    case ContractState::Negotiating:
      return "NEGOTIATING";
    case ContractState::Active:
      return "ACTIVE";
    case ContractState::Terminated:
      return "TERMINATED";
  }
  return "?";
}

static ContractState parse_contract_state(std::string_view s) {
  if (s == "NEGOTIATING") return ContractState::Negotiating;
  if (s == "ACTIVE") return ContractState::Active;
  if (s == "TERMINATED") return ContractState::Terminated;
  throw Error(ErrorCode::CorruptJournal, "contract state " + std::string(s));
}

ControlAction parse_control_action(std::string_view s) {
  if (s == "start") return ControlAction::Start;
  if (s == "stop") return ControlAction::Stop;
  if (s == "rescale") return ControlAction::Rescale;
  if (s == "status") return ControlAction::Status;
  throw Error(ErrorCode::InvalidArgument, "action");
}

Money spot_price(Money current, Money floor, Money cap, double utilization) {
  Money next = Money::from_double(current.to_double() * (1.0 + kSpotAlpha * (utilization - kSpotTarget)));
  return std::clamp(next, floor, cap);
}

void ProviderProfile::validate() const {
  if (company_name.empty()) throw Error(ErrorCode::IncompleteProfile, "company_name");
  if (tax_number.empty()) throw Error(ErrorCode::IncompleteProfile, "tax_number");
  bool bank = bank_account && !bank_account->empty();
  bool post = postal_address && !postal_address->empty();
  if (!bank && !post) throw Error(ErrorCode::IncompleteProfile, "bank_account");
}

Uuid contract_vm_uuid(std::int64_t contract_id) {
  return Uuid{0x6e65737465727963ULL, static_cast<std::uint64_t>(contract_id)};
}

// ---- JSON -----------------------------------------------------------------

nlohmann::json offer_to_json(const ServiceOffer& o) {
  nlohmann::json j = {{"offer_id", o.offer_id},
                      {"kind", offer_kind_name(o.kind)},
                      {"provider_id", o.provider_id},
                      {"backing_host", o.backing_host},
                      {"current_price", o.current_price.to_double()},
                      {"floor_price", o.floor_price.to_double()},
                      {"cap_price", o.cap_price.to_double()},
                      {"quality", o.quality},
                      {"listed", o.listed}};
  if (o.kind == OfferKind::Compute) {
    j["spec"] = resources_to_json(o.spec);
  } else {
    j["size_gib"] = o.size_gib;
  }
  return j;
}

static ServiceOffer offer_from_json(const nlohmann::json& j) {
  ServiceOffer o;
  o.offer_id = j.at("offer_id").get<std::int64_t>();
  o.kind = parse_offer_kind(j.at("kind").get<std::string>());
  o.provider_id = j.at("provider_id").get<std::string>();
  o.backing_host = j.at("backing_host").get<std::string>();
  o.current_price = money_from_json(j.at("current_price"), "current_price");
  o.floor_price = money_from_json(j.at("floor_price"), "floor_price");
  o.cap_price = money_from_json(j.at("cap_price"), "cap_price");
  o.quality = j.at("quality").get<std::map<std::string, std::string>>();
  o.listed = j.at("listed").get<bool>();
  if (o.kind == OfferKind::Compute) {
    o.spec = resources_from_json(j.at("spec"));
  } else {
    o.size_gib = j.at("size_gib").get<std::int64_t>();
  }
  return o;
}

nlohmann::json contract_to_json(const Contract& c) {
  return {{"contract_id", c.contract_id},
          {"consumer_id", c.consumer_id},
          {"offer_id", c.offer_id},
          {"state", contract_state_name(c.state)},
          {"vm", c.vm ? nlohmann::json(c.vm->hex()) : nlohmann::json()},
          {"volume_id", c.volume_id ? nlohmann::json(*c.volume_id) : nlohmann::json()},
          {"agreed_price", c.agreed_price.to_double()},
          {"started_at", c.started_at},
          {"billed_until", c.billed_until},
          {"ended_at", c.ended_at ? nlohmann::json(*c.ended_at) : nlohmann::json()},
          {"command_seq", c.command_seq}};
}

static Contract contract_from_json(const nlohmann::json& j) {
  Contract c;
  c.contract_id = j.at("contract_id").get<std::int64_t>();
  c.consumer_id = j.at("consumer_id").get<std::string>();
  c.offer_id = j.at("offer_id").get<std::int64_t>();
  c.state = parse_contract_state(j.at("state").get<std::string>());
  if (!j.at("vm").is_null()) c.vm = Uuid::parse(j.at("vm").get<std::string>());
  if (!j.at("volume_id").is_null()) c.volume_id = j.at("volume_id").get<std::int64_t>();
  c.agreed_price = money_from_json(j.at("agreed_price"), "agreed_price");
  c.started_at = j.at("started_at").get<Seconds>();
  c.billed_until = j.at("billed_until").get<Seconds>();
  if (!j.at("ended_at").is_null()) c.ended_at = j.at("ended_at").get<Seconds>();
  c.command_seq = j.at("command_seq").get<std::int64_t>();
  return c;
}

nlohmann::json price_point_to_json(const PricePoint& p) {
  return {{"offer_id", p.offer_id}, {"timestamp", p.timestamp}, {"price", p.price.to_double()}};
}

nlohmann::json ledger_to_json(const LedgerReport& r) {
  return {{"user_id", r.user_id},
          {"purchase_cost", r.purchase_cost.to_double()},
          {"cumulative_income", r.cumulative_income.to_double()},
          {"net", r.net.to_double()},
          {"offset_achieved", r.offset_achieved}};
}

static nlohmann::json profile_to_json(const ProviderProfile& p) {
  nlohmann::json j = {{"company_name", p.company_name}, {"tax_number", p.tax_number}};
  j["bank_account"] = p.bank_account ? nlohmann::json(*p.bank_account) : nlohmann::json();
  j["postal_address"] = p.postal_address ? nlohmann::json(*p.postal_address) : nlohmann::json();
  return j;
}

OfferRequest offer_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "offer");
  try {
    OfferRequest r;
    r.kind = parse_offer_kind(j.value("kind", std::string("compute")));
    if (r.kind == OfferKind::Compute) {
      r.spec = resources_from_json(j.at("spec"));
    } else {
      r.size_gib = j.at("size_gib").get<std::int64_t>();
    }
    r.floor_price = money_from_json(j.at("floor_price"), "floor_price");
    r.cap_price = money_from_json(j.at("cap_price"), "cap_price");
    r.initial_price = money_from_json(j.at("initial_price"), "initial_price");
    if (j.contains("quality")) r.quality = j.at("quality").get<std::map<std::string, std::string>>();
    r.backing_host = j.value("backing_host", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("offer: ") + e.what());
  }
}

ProviderProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "profile");
  auto text = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::InvalidArgument, key);
    return it->get<std::string>();
  };
  ProviderProfile p;
  p.company_name = text("company_name").value_or("");
  p.tax_number = text("tax_number").value_or("");
  p.bank_account = text("bank_account");
  p.postal_address = text("postal_address");
  return p;
}

// ---- Market ---------------------------------------------------------------

Market::Market(Node& node, std::filesystem::path state_file) : node_(node), state_file_(std::move(state_file)) {
  UserAccount op;
  op.user_id = kOperatorId;
  op.provider = true;
  op.profile = ProviderProfile{"Nestery Operator", "OP-0000", std::string("operator"), std::nullopt};
  op.backing_hosts.insert(std::string(kRootHostId));
  users_.emplace(op.user_id, op);
  load();
}

void Market::ensure_user(const std::string& user_id) {
  if (user_id.empty()) throw Error(ErrorCode::InvalidArgument, "user_id");
  std::lock_guard lock(mu_);
  if (users_.count(user_id) != 0) return;
  UserAccount u;
  u.user_id = user_id;
  users_.emplace(user_id, std::move(u));
  save();
}

bool Market::has_user(const std::string& user_id) const {
  std::lock_guard lock(mu_);
  return users_.count(user_id) != 0;
}

UserAccount& Market::account(const std::string& user_id) {
  auto it = users_.find(user_id);
  if (it == users_.end()) throw Error(ErrorCode::UnknownUser, user_id);
  return it->second;
}

const UserAccount& Market::account(const std::string& user_id) const {
  auto it = users_.find(user_id);
  if (it == users_.end()) throw Error(ErrorCode::UnknownUser, user_id);
  return it->second;
}

ServiceOffer& Market::offer_ref(std::int64_t offer_id) {
  auto it = offers_.find(offer_id);
  if (it == offers_.end()) throw Error(ErrorCode::UnknownOffer, std::to_string(offer_id));
  return it->second;
}

Contract& Market::contract_ref(std::int64_t contract_id) {
  auto it = contracts_.find(contract_id);
  if (it == contracts_.end()) throw Error(ErrorCode::UnknownContract, std::to_string(contract_id));
  return it->second;
}

ServiceOffer Market::register_offer(const std::string& provider_id, const OfferRequest& request) {
  std::lock_guard lock(mu_);
  accrue_locked(node_.now());
  UserAccount& provider = account(provider_id);
  if (!provider.provider) throw Error(ErrorCode::NotAProvider, provider_id);
  if (request.floor_price.ticks <= 0 || request.floor_price > request.initial_price ||
      request.initial_price > request.cap_price) {
    throw Error(ErrorCode::InvalidPriceBand, request.floor_price.to_string() + " <= " +
                                                 request.initial_price.to_string() + " <= " +
                                                 request.cap_price.to_string());
  }
  std::string backing = request.backing_host;
  if (backing.empty()) {
    if (provider.backing_hosts.empty()) throw Error(ErrorCode::NoBackingCloud, provider_id);
    backing = *provider.backing_hosts.begin();
  } else if (provider.backing_hosts.count(backing) == 0) {
    throw Error(ErrorCode::NoBackingCloud, backing);
  }

  ResourceVector free = node_.free_capacity(backing);
  ServiceOffer o;
  o.kind = request.kind;
  if (request.kind == OfferKind::Compute) {
    request.spec.validate();
    if (auto d = first_shortfall(request.spec, free)) {
      throw Error(ErrorCode::SpecExceedsFreeCapacity, std::string(dimension_name(*d)));
    }
    o.spec = request.spec;
  } else {
    if (request.size_gib < 1) throw Error(ErrorCode::InvalidSize, std::to_string(request.size_gib));
    if (request.size_gib > free.disk_gib) throw Error(ErrorCode::SpecExceedsFreeCapacity, "disk");
    o.size_gib = request.size_gib;
  }
  o.offer_id = next_offer_id_++;
  o.provider_id = provider_id;
  o.backing_host = backing;
  o.current_price = request.initial_price;
  o.floor_price = request.floor_price;
  o.cap_price = request.cap_price;
  o.quality = request.quality;
  offers_.emplace(o.offer_id, o);
  prices_.push_back(PricePoint{o.offer_id, node_.now(), o.current_price});
  save();
  return o;
}

std::vector<ServiceOffer> Market::list_offers(const OfferFilter& filter) const {
  std::lock_guard lock(mu_);
  std::vector<ServiceOffer> out;
  for (const auto& [id, o] : offers_) {
    if (!o.listed && !filter.include_delisted) continue;
    if (filter.kind && o.kind != *filter.kind) continue;
    if (filter.max_price && o.current_price > *filter.max_price) continue;
    if (filter.min_spec && (o.kind != OfferKind::Compute || !vector_fits(*filter.min_spec, o.spec))) continue;
    out.push_back(o);
  }
  std::stable_sort(out.begin(), out.end(), [](const ServiceOffer& a, const ServiceOffer& b) {
    return a.current_price != b.current_price ? a.current_price < b.current_price : a.offer_id < b.offer_id;
  });
  return out;
}

ServiceOffer Market::offer(std::int64_t offer_id) const {
  std::lock_guard lock(mu_);
  auto it = offers_.find(offer_id);
  if (it == offers_.end()) throw Error(ErrorCode::UnknownOffer, std::to_string(offer_id));
  return it->second;
}

PricePoint Market::update_spot_price(std::int64_t offer_id, std::optional<double> utilization) {
  std::lock_guard lock(mu_);
  ServiceOffer& o = offer_ref(offer_id);
  double u = utilization ? *utilization : node_.core_utilization(o.backing_host);
  if (!(u >= 0.0 && u <= 1.0)) throw Error(ErrorCode::InvalidArgument, "utilization");
  o.current_price = spot_price(o.current_price, o.floor_price, o.cap_price, u);
  PricePoint p{offer_id, node_.now(), o.current_price};
  prices_.push_back(p);
  save();
  return p;
}

std::vector<PricePoint> Market::price_history(std::int64_t offer_id, std::optional<Seconds> from,
                                              std::optional<Seconds> to) const {
  std::lock_guard lock(mu_);
  if (offers_.count(offer_id) == 0) throw Error(ErrorCode::UnknownOffer, std::to_string(offer_id));
  std::vector<PricePoint> out;
  for (const auto& p : prices_) {
    if (p.offer_id != offer_id) continue;
    if (from && p.timestamp < *from) continue;
    if (to && p.timestamp > *to) continue;
    out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PricePoint& a, const PricePoint& b) { return a.timestamp < b.timestamp; });
  return out;
}

static Error relay(const CommandResult& r) { return Error(*r.error, r.detail); }

Contract Market::negotiate_contract(const std::string& consumer_id, std::int64_t offer_id) {
  std::lock_guard lock(mu_);
  const Seconds now = node_.now();
  accrue_locked(now);
  account(consumer_id);
  ServiceOffer& o = offer_ref(offer_id);
  if (!o.listed) throw Error(ErrorCode::CapacityGone, "offer " + std::to_string(offer_id) + " is contracted");

  Contract c;
  c.contract_id = next_contract_id_;
  c.consumer_id = consumer_id;
  c.offer_id = offer_id;
  c.agreed_price = o.current_price;

  const std::string key = "contract-" + std::to_string(c.contract_id) + "-allocate";
  if (o.kind == OfferKind::Compute) {
    int level = o.backing_host == kRootHostId ? 1 : 2;
    VmDefinition def;
    def.uuid = contract_vm_uuid(c.contract_id);
    def.name = "contract-" + std::to_string(c.contract_id);
    def.resources = o.spec;
    def.level = level;
    auto img = o.quality.find("image");
    def.image_ref = img != o.quality.end() ? img->second : "market-default.qcow2";
    CommandResult r = node_.execute(cmd::Launch{def, o.backing_host, consumer_id}, key);
    if (!r.ok) {
      if (*r.error == ErrorCode::AdmissionDenied || *r.error == ErrorCode::IllegalState) {
        throw Error(ErrorCode::CapacityGone, r.detail);
      }
      throw relay(r);
    }
    c.vm = def.uuid;
  } else {
    CommandResult r = node_.execute(cmd::VolumeCreate{o.size_gib, o.backing_host}, key);
    if (!r.ok) {
      if (*r.error == ErrorCode::AdmissionDenied || *r.error == ErrorCode::IllegalState) {
        throw Error(ErrorCode::CapacityGone, r.detail);
      }
      throw relay(r);
    }
    c.volume_id = r.result.at("volume_id").get<std::int64_t>();
  }

  c.state = ContractState::Active;
  c.started_at = now;
  c.billed_until = now;
  ++next_contract_id_;
  o.listed = false;
  contracts_.emplace(c.contract_id, c);
  save();
  return c;
}

CommandResult Market::control_allocation(std::int64_t contract_id, const std::string& caller, ControlAction action,
                                         std::optional<ResourceVector> resources, const std::string& request_key) {
  std::lock_guard lock(mu_);
  accrue_locked(node_.now());
  Contract& c = contract_ref(contract_id);
  if (c.consumer_id != caller) throw Error(ErrorCode::NotYourContract, std::to_string(contract_id));
  if (c.state != ContractState::Active) {
    throw Error(ErrorCode::ContractNotActive, std::string(contract_state_name(c.state)));
  }
  const ServiceOffer& o = offer_ref(c.offer_id);

  if (action == ControlAction::Status) {
    CommandResult r;
    r.type = "status";
    r.ok = true;
    if (c.vm) {
      auto rec = node_.find_record(*c.vm);
      r.result = rec ? record_to_json(*rec) : nlohmann::json();
    } else if (auto v = node_.find_volume(*c.volume_id)) {
      r.result = volume_to_json(*v);
    }
    return r;
  }
  if (!c.vm) throw Error(ErrorCode::InvalidArgument, "storage contracts accept status only");

  Command command;
  switch (action) {
    case ControlAction::Start:
      command = cmd::Start{*c.vm};
      break;
    case ControlAction::Stop:
      command = cmd::Stop{*c.vm};
      break;
    case ControlAction::Rescale: {
      if (!resources) throw Error(ErrorCode::InvalidArgument, "resources");
      resources->validate();
      // The slice bought is the offered spec; growing past it would take
      // capacity the provider never sold.
      if (auto d = first_shortfall(*resources, o.spec)) {
        throw Error(ErrorCode::AdmissionDenied, std::string(dimension_name(*d)));
      }
      command = cmd::Rescale{*c.vm, *resources};
      break;
    }
    case ControlAction::Status:
      break;
  }
  std::string key = "contract-" + std::to_string(contract_id) + "-";
  if (request_key.empty()) {
    key += "cmd-" + std::to_string(++c.command_seq);
    save();
  } else {
    key += request_key;
  }
  return node_.execute(command, key);
}

Contract Market::terminate_contract(std::int64_t contract_id, const std::string& caller) {
  std::lock_guard lock(mu_);
  const Seconds now = node_.now();
  accrue_locked(now);
  Contract& c = contract_ref(contract_id);
  ServiceOffer& o = offer_ref(c.offer_id);
  if (c.consumer_id != caller && o.provider_id != caller && caller != kOperatorId) {
    throw Error(ErrorCode::NotYourContract, std::to_string(contract_id));
  }
  if (c.state != ContractState::Active) {
    throw Error(ErrorCode::ContractNotActive, std::string(contract_state_name(c.state)));
  }
  const std::string key = "contract-" + std::to_string(contract_id) + "-release";
  if (c.vm) {
    auto rec = node_.find_record(*c.vm);
    if (rec && rec->active()) {
      CommandResult r = node_.execute(cmd::Stop{*c.vm}, key);
      if (!r.ok) throw relay(r);
    }
  } else if (c.volume_id && node_.find_volume(*c.volume_id)) {
    auto v = node_.find_volume(*c.volume_id);
    if (v->attached_to) {
      CommandResult r = node_.execute(cmd::VolumeDetach{*c.volume_id}, key + "-detach");
      if (!r.ok) throw relay(r);
    }
    CommandResult r = node_.execute(cmd::VolumeDelete{*c.volume_id}, key);
    if (!r.ok) throw relay(r);
  }
  c.state = ContractState::Terminated;
  c.ended_at = now;
  o.listed = true;
  save();
  return c;
}

Contract Market::contract(std::int64_t contract_id) const {
  std::lock_guard lock(mu_);
  auto it = contracts_.find(contract_id);
  if (it == contracts_.end()) throw Error(ErrorCode::UnknownContract, std::to_string(contract_id));
  return it->second;
}

std::vector<Contract> Market::contracts() const {
  std::lock_guard lock(mu_);
  std::vector<Contract> out;
  for (const auto& [id, c] : contracts_) out.push_back(c);
  return out;
}

void Market::become_provider(const std::string& user_id, const ProviderProfile& profile, const Uuid& backing_vm) {
  std::lock_guard lock(mu_);
  UserAccount& u = account(user_id);
  profile.validate();
  auto rec = node_.find_record(backing_vm);
  if (!rec || rec->definition.level != 1 || rec->state != VmState::Running || rec->owner != user_id) {
    throw Error(ErrorCode::NoBackingCloud, backing_vm.hex());
  }
  u.provider = true;
  u.profile = profile;
  u.backing_hosts.insert(backing_vm.hex());
  save();
}

LedgerReport Market::ledger_report(const std::string& user_id) const {
  std::lock_guard lock(mu_);
  const_cast<Market*>(this)->accrue_locked(node_.now());
  const UserAccount& u = account(user_id);
  LedgerReport r;
  r.user_id = user_id;
  r.purchase_cost = u.purchase_cost;
  for (const auto& e : u.income) r.cumulative_income = r.cumulative_income + e.amount;
  r.net = r.cumulative_income - r.purchase_cost;
  r.offset_achieved = r.net.ticks >= 0;
  return r;
}

UserAccount Market::user(const std::string& user_id) const {
  std::lock_guard lock(mu_);
  return account(user_id);
}

void Market::accrue() {
  std::lock_guard lock(mu_);
  accrue_locked(node_.now());
}

void Market::accrue_locked(Seconds now) {
  bool changed = false;
  for (auto& [id, c] : contracts_) {
    if (c.state != ContractState::Active || now <= c.billed_until) continue;
    std::int64_t hours = (now - c.billed_until) / kBillingPeriod;
    if (hours == 0) continue;
    Money amount = c.agreed_price * hours;
    c.billed_until += hours * kBillingPeriod;
    account(c.consumer_id).purchase_cost = account(c.consumer_id).purchase_cost + amount;
    account(offers_.at(c.offer_id).provider_id).income.push_back(IncomeEvent{c.billed_until, amount, c.contract_id});
    changed = true;
  }
  if (changed) save();
}

nlohmann::json Market::to_json() const {
  nlohmann::json users = nlohmann::json::array();
  for (const auto& [id, u] : users_) {
    nlohmann::json income = nlohmann::json::array();
    for (const auto& e : u.income) {
      income.push_back({{"timestamp", e.timestamp}, {"amount", e.amount.to_string()}, {"contract_id", e.contract_id}});
    }
    users.push_back({{"user_id", u.user_id},
                     {"provider", u.provider},
                     {"profile", u.profile ? profile_to_json(*u.profile) : nlohmann::json()},
                     {"backing_hosts", u.backing_hosts},
                     {"purchase_cost", u.purchase_cost.to_string()},
                     {"income", std::move(income)}});
  }
  nlohmann::json offers = nlohmann::json::array();
  for (const auto& [id, o] : offers_) offers.push_back(offer_to_json(o));
  nlohmann::json contracts = nlohmann::json::array();
  for (const auto& [id, c] : contracts_) contracts.push_back(contract_to_json(c));
  nlohmann::json prices = nlohmann::json::array();
  for (const auto& p : prices_) {
    prices.push_back({{"offer_id", p.offer_id}, {"timestamp", p.timestamp}, {"price", p.price.to_string()}});
  }
  return {{"users", std::move(users)},
          {"offers", std::move(offers)},
          {"contracts", std::move(contracts)},
          {"prices", std::move(prices)},
          {"next_offer_id", next_offer_id_},
          {"next_contract_id", next_contract_id_}};
}

void Market::save() const {
  if (state_file_.empty()) return;
  std::filesystem::path tmp = state_file_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageFailure, tmp.string());
    out << to_json().dump(1);
    if (!out) throw Error(ErrorCode::StorageFailure, tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, state_file_, ec);
  if (ec) throw Error(ErrorCode::StorageFailure, ec.message());
}

void Market::load() {
  if (state_file_.empty() || !std::filesystem::exists(state_file_)) return;
  std::ifstream in(state_file_, std::ios::binary);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    for (const auto& ju : j.at("users")) {
      UserAccount u;
      u.user_id = ju.at("user_id").get<std::string>();
      u.provider = ju.at("provider").get<bool>();
      if (!ju.at("profile").is_null()) u.profile = profile_from_json(ju.at("profile"));
      u.backing_hosts = ju.at("backing_hosts").get<std::set<std::string>>();
      u.purchase_cost = Money::parse(ju.at("purchase_cost").get<std::string>());
      for (const auto& e : ju.at("income")) {
        u.income.push_back(IncomeEvent{e.at("timestamp").get<Seconds>(),
                                       Money::parse(e.at("amount").get<std::string>()),
                                       e.at("contract_id").get<std::int64_t>()});
      }
      users_.insert_or_assign(u.user_id, std::move(u));
    }
    for (const auto& jo : j.at("offers")) {
      ServiceOffer o = offer_from_json(jo);
      offers_.emplace(o.offer_id, std::move(o));
    }
    for (const auto& jc : j.at("contracts")) {
      Contract c = contract_from_json(jc);
      contracts_.emplace(c.contract_id, std::move(c));
    }
    for (const auto& jp : j.at("prices")) {
      prices_.push_back(PricePoint{jp.at("offer_id").get<std::int64_t>(), jp.at("timestamp").get<Seconds>(),
                                   Money::parse(jp.at("price").get<std::string>())});
    }
    next_offer_id_ = j.at("next_offer_id").get<std::int64_t>();
    next_contract_id_ = j.at("next_contract_id").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StorageFailure, state_file_.string() + ": " + e.what());
  }
}

}  // namespace nestery::market
