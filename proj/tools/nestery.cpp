// nestery: operator CLI. Every invocation opens the node in the data
// directory (replaying its journal), performs one operation, drains the
// command queue and exits. Exit codes: 0 ok, 1 domain error, 2 usage error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "nestery/definition_doc.hpp"
#include "nestery/gateway.hpp"
#include "nestery/market.hpp"
#include "nestery/node.hpp"
#include "nestery/perfbench.hpp"

using namespace nestery;
using nlohmann::json;

namespace {

struct Globals {
  std::string data_dir = "nestery-data";
  std::string clock = "sim";
  std::string user = market::kOperatorId;
  bool json_out = false;
};

struct ResourceOpts {
  std::optional<std::int64_t> cores, priority, ram_mib, disk_gib, nics;

  void add(CLI::App* app) {
    app->add_option("--cores", cores, "CPU cores");
    app->add_option("--priority", priority, "CPU priority weight (1-1024)");
    app->add_option("--ram-mib", ram_mib, "RAM in MiB");
    app->add_option("--disk-gib", disk_gib, "Disk in GiB");
    app->add_option("--nics", nics, "Network adapters");
  }
  ResourceVector over(ResourceVector base) const {
    if (cores) base.cpu_cores = *cores;
    if (priority) base.cpu_priority = *priority;
    if (ram_mib) base.ram_mib = *ram_mib;
    if (disk_gib) base.disk_gib = *disk_gib;
    if (nics) base.nics = *nics;
    return base;
  }
};

struct DefinitionOpts {
  std::string uuid, name, image = "base.qcow2", parent = std::string(kRootHostId), owner, file;
  int level = 0;
  ResourceOpts res;

  void add(CLI::App* app) {
    app->add_option("--uuid", uuid, "32 hex digits; random when omitted");
    app->add_option("--name", name, "Human-readable name");
    app->add_option("--image", image, "Image reference")->capture_default_str();
    app->add_option("--parent", parent, "Host: l0 or an L1 VM uuid")->capture_default_str();
    app->add_option("--level", level, "Nesting level (default: parent level + 1)");
    app->add_option("--owner", owner, "Owning user");
    app->add_option("--definition", file, "Canonical definition document to read instead of flags");
    res.add(app);
  }

  VmDefinition build() const {
    if (!file.empty()) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + file);
      std::stringstream ss;
      ss << in.rdbuf();
      return parse_definition(ss.str());
    }
    VmDefinition def;
    if (uuid.empty()) {
      std::random_device rd;
      def.uuid = Uuid{(std::uint64_t{rd()} << 32) | rd(), (std::uint64_t{rd()} << 32) | rd()};
    } else {
      def.uuid = Uuid::parse(uuid);
    }
    def.name = name.empty() ? "vm-" + def.uuid.hex().substr(0, 8) : name;
    def.image_ref = image;
    def.level = level != 0 ? level : (parent == kRootHostId ? 1 : 2);
    def.resources = res.over(ResourceVector{});
    return def;
  }
};

class Session {
 public:
  explicit Session(const Globals& g) : globals_(g) {}
  Node& node() {
    open();
    return *node_;
  }
  market::Market& market() {
    open();
    return *market_;
  }

 private:
  // Opened on first use, so bench commands never touch the data directory.
  void open() {
    if (node_) return;
    NodeOptions o;
    o.data_dir = globals_.data_dir;
    o.clock_mode = globals_.clock == "wall" ? Clock::Mode::Wall : Clock::Mode::Simulated;
    node_ = std::make_unique<Node>(o);
    market_ = std::make_unique<market::Market>(*node_, std::filesystem::path(globals_.data_dir) / "market.json");
    market_->ensure_user(globals_.user);
  }

  const Globals& globals_;
  std::unique_ptr<Node> node_;
  std::unique_ptr<market::Market> market_;
};

void print(const Globals& g, const json& j, const std::string& human) {
  if (g.json_out) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << human << "\n";
  }
}

std::string vm_line(const json& rec) {
  return rec.value("uuid", "") + "  " + rec.value("state", "") + "  " + rec.value("name", "");
}

// Runs one command through the queue; a failed result becomes an Error.
json run_command(Session& s, const Command& c, const std::string& key) {
  CommandResult r = s.node().execute(c, key);
  if (!r.ok) throw Error(*r.error, r.detail);
  return r.result;
}

void print_host(const json& host, int depth, std::ostream& out) {
  std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const json& cap = host.at("capacity");
  const json& free = host.at("free");
  out << pad << "host " << host.at("node_id").get<std::string>() << " (L" << host.at("level").get<int>()
      << ")  free cores " << free.at("cores") << "/" << cap.at("cores") << ", ram " << free.at("ram_mib") << "/"
      << cap.at("ram_mib") << " MiB, disk " << free.at("disk_gib") << "/" << cap.at("disk_gib") << " GiB, nics "
      << free.at("nics") << "/" << cap.at("nics") << "\n";
  for (const json& vm : host.at("vms")) {
    const json& r = vm.at("resources");
    out << pad << "  " << vm.at("uuid").get<std::string>() << "  L" << vm.at("level").get<int>() << "  "
        << vm.at("state").get<std::string>() << "  " << vm.at("name").get<std::string>() << "  (" << r.at("cores")
        << "," << r.at("priority") << "," << r.at("ram_mib") << "," << r.at("disk_gib") << "," << r.at("nics")
        << ")  up " << vm.at("uptime_s") << "s\n";
    if (vm.contains("host")) print_host(vm.at("host"), depth + 2, out);
  }
}

std::string status_text(const json& st) {
  std::ostringstream out;
  out << "time " << st.at("now") << ", " << st.at("vm_count") << " VM(s)\n";
  print_host(st.at("root"), 0, out);
  for (const json& v : st.at("volumes")) {
    out << "volume " << v.at("volume_id") << " on " << v.at("host").get<std::string>() << "  " << v.at("used_gib")
        << "/" << v.at("size_gib") << " GiB";
    if (!v.at("attached_to").is_null()) out << "  attached to " << v.at("attached_to").get<std::string>();
    out << "\n";
  }
  for (const json& a : st.at("allocations")) {
    out << "allocation " << a.at("id") << "  " << a.at("state").get<std::string>() << "  start " << a.at("start_time")
        << " for " << a.at("duration_s") << "s\n";
  }
  std::string s = out.str();
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

bench::OverheadModel model_from(double wdur, double peak) {
  bench::OverheadModel m;
  m.warmup_duration_s = wdur;
  m.warmup_peak_multiplier = peak;
  m.validate();
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested cloud control plane"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  if (const char* d = std::getenv("NESTERY_DATA_DIR"); d && *d) g.data_dir = d;
  if (const char* c = std::getenv("NESTERY_CLOCK"); c && *c) g.clock = c;
  app.add_option("--data-dir", g.data_dir, "Data directory (env NESTERY_DATA_DIR)")->capture_default_str();
  app.add_option("--clock", g.clock, "sim or wall (env NESTERY_CLOCK)")
      ->check(CLI::IsMember({"sim", "wall"}))
      ->capture_default_str();
  app.add_option("--user", g.user, "Acting user for market commands")->capture_default_str();
  app.add_flag("--json", g.json_out, "Machine-readable output");

  std::string key;
  auto add_key = [&](CLI::App* sub) { sub->add_option("--key", key, "Idempotency key"); };

  std::function<void(Session&)> action;

  // ---- orchestration ----
  DefinitionOpts launch_def;
  auto* launch = app.add_subcommand("launch", "Launch a VM");
  launch_def.add(launch);
  add_key(launch);
  launch->callback([&] {
    action = [&](Session& s) {
      VmDefinition def = launch_def.build();
      json r = run_command(s, cmd::Launch{def, launch_def.parent, launch_def.owner.empty() ? g.user : launch_def.owner}, key);
      print(g, r, vm_line(r));
    };
  });

  std::string uuid_arg;
  auto* start = app.add_subcommand("start", "Start a stopped VM");
  start->add_option("uuid", uuid_arg)->required();
  add_key(start);
  start->callback([&] {
    action = [&](Session& s) {
      json r = run_command(s, cmd::Start{Uuid::parse(uuid_arg)}, key);
      print(g, r, vm_line(r));
    };
  });

  auto* stop = app.add_subcommand("stop", "Stop a VM (and its children)");
  stop->add_option("uuid", uuid_arg)->required();
  add_key(stop);
  stop->callback([&] {
    action = [&](Session& s) {
      json r = run_command(s, cmd::Stop{Uuid::parse(uuid_arg)}, key);
      print(g, r, vm_line(r));
    };
  });

  ResourceOpts rescale_res;
  auto* rescale = app.add_subcommand("rescale", "Change a running VM's resources");
  rescale->add_option("uuid", uuid_arg)->required();
  rescale_res.add(rescale);
  add_key(rescale);
  rescale->callback([&] {
    action = [&](Session& s) {
      Uuid u = Uuid::parse(uuid_arg);
      auto rec = s.node().find_record(u);
      if (!rec) throw Error(ErrorCode::UnknownVm, u.hex());
      json r = run_command(s, cmd::Rescale{u, rescale_res.over(rec->definition.resources)}, key);
      print(g, r, vm_line(r));
    };
  });

  DefinitionOpts sched_def;
  Seconds sched_start = 0, sched_duration = 0;
  auto* schedule = app.add_subcommand("schedule", "Schedule a VM for a future time window");
  sched_def.add(schedule);
  schedule->add_option("--start", sched_start, "Start time (clock seconds)")->required();
  schedule->add_option("--duration", sched_duration, "Duration in seconds")->required();
  add_key(schedule);
  schedule->callback([&] {
    action = [&](Session& s) {
      VmDefinition def = sched_def.build();
      json r = run_command(s, cmd::ScheduleAllocation{def, sched_def.parent, sched_start, sched_duration,
                                                      sched_def.owner.empty() ? g.user : sched_def.owner},
                           key);
      print(g, r, "allocation " + std::to_string(r.at("id").get<std::int64_t>()) + "  " + r.at("state").get<std::string>());
    };
  });

  std::optional<Seconds> tick_to, tick_advance;
  auto* tick = app.add_subcommand("tick", "Advance the simulated clock and run the scheduler");
  auto* to_opt = tick->add_option("--to", tick_to, "Absolute time");
  tick->add_option("--advance", tick_advance, "Seconds to advance")->excludes(to_opt);
  tick->callback([&] {
    action = [&](Session& s) {
      std::optional<Seconds> t = tick_to;
      if (tick_advance) t = s.node().now() + *tick_advance;
      auto emitted = s.node().tick(t);
      auto results = s.node().process_pending();
      s.market().accrue();
      json keys = json::array();
      for (const auto& e : emitted) keys.push_back(e.idempotency_key);
      json res = json::array();
      for (const auto& r : results) res.push_back(r.to_json());
      print(g, json{{"now", s.node().now()}, {"emitted", keys}, {"results", res}},
            "time " + std::to_string(s.node().now()) + ", " + std::to_string(emitted.size()) + " command(s) emitted");
    };
  });

  auto* status = app.add_subcommand("status", "Show the host/VM tree");
  status->callback([&] {
    action = [&](Session& s) {
      json st = s.node().status();
      print(g, st, status_text(st));
    };
  });

  // ---- volumes ----
  auto* volume = app.add_subcommand("volume", "Block volumes");
  volume->require_subcommand(1);
  volume->fallthrough();
  std::int64_t vol_size = 0, vol_id = 0;
  std::string vol_host = std::string(kRootHostId), vol_vm;
  auto vol_print = [&](const json& v) {
    print(g, v, "volume " + std::to_string(v.at("volume_id").get<std::int64_t>()) + "  " +
                    std::to_string(v.at("size_gib").get<std::int64_t>()) + " GiB on " + v.at("host").get<std::string>());
  };
  auto* vcreate = volume->add_subcommand("create", "Create a volume");
  vcreate->add_option("--size", vol_size, "GiB")->required();
  vcreate->add_option("--host", vol_host, "Host id")->capture_default_str();
  add_key(vcreate);
  vcreate->callback([&] { action = [&](Session& s) { vol_print(run_command(s, cmd::VolumeCreate{vol_size, vol_host}, key)); }; });
  auto* vresize = volume->add_subcommand("resize", "Resize a volume");
  vresize->add_option("id", vol_id)->required();
  vresize->add_option("--size", vol_size, "GiB")->required();
  add_key(vresize);
  vresize->callback([&] { action = [&](Session& s) { vol_print(run_command(s, cmd::VolumeResize{vol_id, vol_size}, key)); }; });
  auto* vdelete = volume->add_subcommand("delete", "Delete a detached volume");
  vdelete->add_option("id", vol_id)->required();
  add_key(vdelete);
  vdelete->callback([&] {
    action = [&](Session& s) {
      json r = run_command(s, cmd::VolumeDelete{vol_id}, key);
      print(g, r, "volume " + std::to_string(vol_id) + " deleted");
    };
  });
  auto* vattach = volume->add_subcommand("attach", "Attach a volume to a VM");
  vattach->add_option("id", vol_id)->required();
  vattach->add_option("--vm", vol_vm, "VM uuid")->required();
  add_key(vattach);
  vattach->callback([&] { action = [&](Session& s) { vol_print(run_command(s, cmd::VolumeAttach{vol_id, Uuid::parse(vol_vm)}, key)); }; });
  auto* vdetach = volume->add_subcommand("detach", "Detach a volume");
  vdetach->add_option("id", vol_id)->required();
  add_key(vdetach);
  vdetach->callback([&] { action = [&](Session& s) { vol_print(run_command(s, cmd::VolumeDetach{vol_id}, key)); }; });

  auto* snapshot = app.add_subcommand("snapshot", "Snapshot a VM's disk into a volume");
  snapshot->add_option("uuid", uuid_arg)->required();
  snapshot->add_option("--volume", vol_id, "Target volume")->required();
  add_key(snapshot);
  snapshot->callback([&] {
    action = [&](Session& s) {
      json r = run_command(s, cmd::SnapshotCreate{Uuid::parse(uuid_arg), vol_id}, key);
      print(g, r, "snapshot " + r.at("name").get<std::string>());
    };
  });

  // ---- market ----
  auto* mkt = app.add_subcommand("market", "Resource market");
  mkt->require_subcommand(1);
  mkt->fallthrough();
  std::optional<std::string> f_kind, f_max;
  ResourceOpts f_min;
  bool f_all = false;
  auto* offers = mkt->add_subcommand("offers", "List offers");
  offers->add_option("--kind", f_kind)->check(CLI::IsMember({"compute", "storage"}));
  offers->add_option("--max-price", f_max);
  offers->add_flag("--all", f_all, "Include contracted offers");
  f_min.add(offers);
  offers->callback([&] {
    action = [&](Session& s) {
      market::OfferFilter f;
      if (f_kind) f.kind = market::parse_offer_kind(*f_kind);
      if (f_max) f.max_price = market::Money::parse(*f_max);
      f.include_delisted = f_all;
      if (f_min.cores || f_min.ram_mib || f_min.disk_gib || f_min.nics) f.min_spec = f_min.over(ResourceVector{1, 1, 64, 0, 0});
      json out = json::array();
      std::ostringstream text;
      for (const auto& o : s.market().list_offers(f)) {
        out.push_back(market::offer_to_json(o));
        text << "offer " << o.offer_id << "  " << market::offer_kind_name(o.kind) << "  " << o.current_price.to_string()
             << "/h  by " << o.provider_id << (o.listed ? "" : "  (contracted)") << "\n";
      }
      std::string t = text.str();
      if (!t.empty()) t.pop_back();
      print(g, out, t.empty() ? "no offers" : t);
    };
  });

  std::string o_kind = "compute", o_floor, o_cap, o_price, o_backing;
  std::int64_t o_size = 0;
  std::vector<std::string> o_quality;
  ResourceOpts o_res;
  auto* offer = mkt->add_subcommand("offer", "Register an offer as the acting provider");
  offer->add_option("--kind", o_kind)->check(CLI::IsMember({"compute", "storage"}))->capture_default_str();
  offer->add_option("--size", o_size, "Storage offers: GiB");
  offer->add_option("--floor", o_floor, "Floor price per hour")->required();
  offer->add_option("--cap", o_cap, "Cap price per hour")->required();
  offer->add_option("--price", o_price, "Initial price per hour")->required();
  offer->add_option("--backing", o_backing, "Backing host (default: the provider's first)");
  offer->add_option("--quality", o_quality, "key=value quality attributes");
  o_res.add(offer);
  offer->callback([&] {
    action = [&](Session& s) {
      market::OfferRequest r;
      r.kind = market::parse_offer_kind(o_kind);
      r.spec = o_res.over(ResourceVector{});
      r.size_gib = o_size;
      r.floor_price = market::Money::parse(o_floor);
      r.cap_price = market::Money::parse(o_cap);
      r.initial_price = market::Money::parse(o_price);
      r.backing_host = o_backing;
      for (const auto& q : o_quality) {
        auto eq = q.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "quality " + q);
        r.quality[q.substr(0, eq)] = q.substr(eq + 1);
      }
      market::ServiceOffer o = s.market().register_offer(g.user, r);
      print(g, market::offer_to_json(o), "offer " + std::to_string(o.offer_id) + " listed at " + o.current_price.to_string());
    };
  });

  std::int64_t id_arg = 0;
  auto* negotiate = mkt->add_subcommand("negotiate", "Contract an offer at its current price");
  negotiate->add_option("offer", id_arg)->required();
  negotiate->callback([&] {
    action = [&](Session& s) {
      market::Contract c = s.market().negotiate_contract(g.user, id_arg);
      print(g, market::contract_to_json(c),
            "contract " + std::to_string(c.contract_id) + " ACTIVE at " + c.agreed_price.to_string() + "/h");
    };
  });

  std::optional<Seconds> p_from, p_to;
  auto* prices = mkt->add_subcommand("prices", "Price history of an offer");
  prices->add_option("offer", id_arg)->required();
  prices->add_option("--from", p_from);
  prices->add_option("--to", p_to);
  prices->callback([&] {
    action = [&](Session& s) {
      json out = json::array();
      std::ostringstream text;
      for (const auto& p : s.market().price_history(id_arg, p_from, p_to)) {
        out.push_back(market::price_point_to_json(p));
        text << p.timestamp << "  " << p.price.to_string() << "\n";
      }
      std::string t = text.str();
      if (!t.empty()) t.pop_back();
      print(g, out, t);
    };
  });

  std::string ledger_user;
  auto* ledger = mkt->add_subcommand("ledger", "Resale ledger of a user");
  ledger->add_option("user", ledger_user, "Defaults to --user");
  ledger->callback([&] {
    action = [&](Session& s) {
      market::LedgerReport r = s.market().ledger_report(ledger_user.empty() ? g.user : ledger_user);
      print(g, market::ledger_to_json(r),
            "cost " + r.purchase_cost.to_string() + ", income " + r.cumulative_income.to_string() + ", net " +
                r.net.to_string() + (r.offset_achieved ? " (offset achieved)" : ""));
    };
  });

  market::ProviderProfile profile;
  std::optional<std::string> bank, postal;
  std::string backing_vm;
  auto* become = mkt->add_subcommand("become-provider", "Take the provider role, backed by an owned L1 VM");
  become->add_option("--company", profile.company_name);
  become->add_option("--tax-number", profile.tax_number);
  become->add_option("--bank-account", bank);
  become->add_option("--postal-address", postal);
  become->add_option("--backing-vm", backing_vm)->required();
  become->callback([&] {
    action = [&](Session& s) {
      profile.bank_account = bank;
      profile.postal_address = postal;
      s.market().become_provider(g.user, profile, Uuid::parse(backing_vm));
      print(g, json{{"user_id", g.user}, {"provider", true}}, g.user + " is now a provider");
    };
  });

  std::string c_action;
  ResourceOpts c_res;
  auto* control = mkt->add_subcommand("control", "Start/stop/rescale/status a contracted allocation");
  control->add_option("contract", id_arg)->required();
  control->add_option("action", c_action)->required()->check(CLI::IsMember({"start", "stop", "rescale", "status"}));
  c_res.add(control);
  add_key(control);
  control->callback([&] {
    action = [&](Session& s) {
      market::ControlAction a = market::parse_control_action(c_action);
      std::optional<ResourceVector> res;
      if (a == market::ControlAction::Rescale) {
        market::Contract c = s.market().contract(id_arg);
        ResourceVector base = c.vm && s.node().find_record(*c.vm) ? s.node().find_record(*c.vm)->definition.resources
                                                                  : ResourceVector{};
        res = c_res.over(base);
      }
      CommandResult r = s.market().control_allocation(id_arg, g.user, a, res, key);
      if (!r.ok) throw Error(*r.error, r.detail);
      print(g, r.to_json(), r.result.is_object() && r.result.contains("state") ? vm_line(r.result) : r.result.dump());
    };
  });

  auto* terminate = mkt->add_subcommand("terminate", "Terminate a contract and release its allocation");
  terminate->add_option("contract", id_arg)->required();
  terminate->callback([&] {
    action = [&](Session& s) {
      market::Contract c = s.market().terminate_contract(id_arg, g.user);
      print(g, market::contract_to_json(c), "contract " + std::to_string(c.contract_id) + " TERMINATED");
    };
  });

  std::optional<double> utilization;
  auto* reprice = mkt->add_subcommand("reprice", "Apply the spot-price rule to an offer");
  reprice->add_option("offer", id_arg)->required();
  reprice->add_option("--utilization", utilization, "Override the measured utilization (0..1)");
  reprice->callback([&] {
    action = [&](Session& s) {
      market::PricePoint p = s.market().update_spot_price(id_arg, utilization);
      print(g, market::price_point_to_json(p), "offer " + std::to_string(id_arg) + " now " + p.price.to_string());
    };
  });

  auto* contracts = mkt->add_subcommand("contracts", "List contracts");
  contracts->callback([&] {
    action = [&](Session& s) {
      json out = json::array();
      std::ostringstream text;
      for (const auto& c : s.market().contracts()) {
        out.push_back(market::contract_to_json(c));
        text << "contract " << c.contract_id << "  offer " << c.offer_id << "  " << c.consumer_id << "  "
             << market::contract_state_name(c.state) << "\n";
      }
      std::string t = text.str();
      if (!t.empty()) t.pop_back();
      print(g, out, t);
    };
  });

  // ---- bench ----
  auto* bench_cmd = app.add_subcommand("bench", "Nesting overhead simulator");
  bench_cmd->require_subcommand(1);
  bench_cmd->fallthrough();
  bench::LoadProfile profile_opts;
  bench::OverheadModel model_defaults;
  double wdur = model_defaults.warmup_duration_s, peak = model_defaults.warmup_peak_multiplier;
  int slots = bench::kDefaultServingSlots;
  double t_avg = 0.082, t_p80 = 0.081, t_p90 = 0.098;
  std::optional<double> mu, sigma;
  std::string out_dir, plot_out = "overhead.dat";
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--users", profile_opts.users)->capture_default_str();
    sub->add_option("--period", profile_opts.period_s)->capture_default_str();
    sub->add_option("--think", profile_opts.think_mean_s, "Mean think time (s)")->capture_default_str();
    sub->add_option("--seed", profile_opts.seed)->capture_default_str();
    sub->add_option("--warmup-duration", wdur)->capture_default_str();
    sub->add_option("--warmup-peak", peak)->capture_default_str();
    sub->add_option("--slots", slots, "Serving slots")->capture_default_str();
    sub->add_option("--target-avg", t_avg)->capture_default_str();
    sub->add_option("--target-p80", t_p80)->capture_default_str();
    sub->add_option("--target-p90", t_p90)->capture_default_str();
  };
  auto base_for = [&](const bench::OverheadModel& m) {
    if (mu) return bench::ServiceTimeBase{*mu, sigma.value_or(0.0)};
    bench::CalibrationOptions co;
    co.serving_slots = slots;
    return bench::calibrate(bench::StatsSummary{t_avg, t_p80, t_p90, 0}, profile_opts, m, co).base;
  };

  auto* calibrate = bench_cmd->add_subcommand("calibrate", "Fit the L0 service-time base to target statistics");
  add_model(calibrate);
  calibrate->callback([&] {
    action = [&](Session&) {
      bench::OverheadModel m = model_from(wdur, peak);
      bench::CalibrationOptions co;
      co.serving_slots = slots;
      bench::CalibrationResult r = bench::calibrate(bench::StatsSummary{t_avg, t_p80, t_p90, 0}, profile_opts, m, co);
      char buf[160];
      std::snprintf(buf, sizeof buf, "mu %.6f sigma %.6f  (avg %.4f p80 %.4f p90 %.4f, residual %.3f)", r.base.mu,
                    r.base.sigma, r.achieved.avg, r.achieved.p80, r.achieved.p90, r.residual);
      print(g,
            json{{"mu", r.base.mu},
                 {"sigma", r.base.sigma},
                 {"achieved", {{"avg", r.achieved.avg}, {"p80", r.achieved.p80}, {"p90", r.achieved.p90}}},
                 {"residual", r.residual}},
            buf);
    };
  });

  auto* run = bench_cmd->add_subcommand("run", "Simulate L0, L1 and L2 and report statistics");
  add_model(run);
  run->add_option("--mu", mu, "Skip calibration and use this base");
  run->add_option("--sigma", sigma);
  run->add_option("--out-dir", out_dir, "Write L0.csv, L1.csv, L2.csv and summary.json here");
  run->callback([&] {
    action = [&](Session&) {
      bench::OverheadModel m = model_from(wdur, peak);
      bench::ExperimentReport rep = bench::run_experiment(m, profile_opts, base_for(m), slots);
      json summary = rep.summary_json();
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        for (const auto& lr : rep.levels) {
          std::ofstream csv(std::filesystem::path(out_dir) / ("L" + std::to_string(lr.level) + ".csv"));
          bench::write_csv(csv, lr.samples);
        }
        std::ofstream(std::filesystem::path(out_dir) / "summary.json") << summary.dump(2) << "\n";
      }
      std::ostringstream text;
      char buf[160];
      for (const auto& lr : rep.levels) {
        std::snprintf(buf, sizeof buf, "L%d  avg %.4f  p80 %.4f  p90 %.4f  n=%zu\n", lr.level, lr.summary.avg,
                      lr.summary.p80, lr.summary.p90, lr.summary.count);
        text << buf;
      }
      std::snprintf(buf, sizeof buf, "overhead L1/L0 %.2f%%  L2/L0 %.2f%%  L2/L1 %.2f%%", rep.l1_over_l0_pct,
                    rep.l2_over_l0_pct, rep.l2_over_l1_pct);
      text << buf;
      print(g, summary, text.str());
    };
  });

  auto* plot = bench_cmd->add_subcommand("plot", "Write gnuplot data and script for the three-level series");
  add_model(plot);
  plot->add_option("--mu", mu);
  plot->add_option("--sigma", sigma);
  plot->add_option("--out", plot_out, "Data file; a .gp script is written next to it")->capture_default_str();
  plot->callback([&] {
    action = [&](Session&) {
      bench::OverheadModel m = model_from(wdur, peak);
      bench::ExperimentReport rep = bench::run_experiment(m, profile_opts, base_for(m), slots);
      std::ofstream dat(plot_out);
      if (!dat) throw Error(ErrorCode::StorageFailure, plot_out);
      bench::write_gnuplot(dat, rep);
      std::filesystem::path script = std::filesystem::path(plot_out).replace_extension(".gp");
      std::ofstream gp(script);
      gp << "set terminal pngcairo size 900,900\nset output '"
         << std::filesystem::path(plot_out).replace_extension(".png").string() << "'\n"
         << "set multiplot layout 3,1\nset xlabel 'time (s)'\nset ylabel 'response (s)'\n";
      for (int level = 0; level < 3; ++level) {
        gp << "set title 'L" << level << "'\nplot '" << plot_out << "' index " << level
           << " using 1:2 with points pt 7 ps 0.3 notitle\n";
      }
      gp << "unset multiplot\n";
      print(g, json{{"data", plot_out}, {"script", script.string()}}, "wrote " + plot_out + " and " + script.string());
    };
  });

  // ---- serve ----
  std::string listen;
  std::vector<std::string> tokens;
  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  serve->add_option("--listen", listen, "host:port (env NESTERY_LISTEN)");
  serve->add_option("--token", tokens, "token=user (env NESTERY_TOKENS)");
  serve->callback([&] {
    action = [&](Session& s) {
      GatewayConfig cfg;
      cfg.data_dir = g.data_dir;
      cfg.clock_mode = s.node().options().clock_mode;
      cfg = gateway_config_from_env(cfg);
      if (!listen.empty()) parse_listen(listen, cfg);
      for (const auto& t : tokens) {
        auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::InvalidArgument, "token " + t);
        cfg.tokens[t.substr(0, eq)] = t.substr(eq + 1);
      }
      if (cfg.tokens.empty()) {
        std::random_device rd;
        char buf[33];
        std::snprintf(buf, sizeof buf, "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
        cfg.tokens[buf] = market::kOperatorId;
        std::fprintf(stderr, "no tokens configured; operator token: %s\n", buf);
      }
      for (const auto& [tok, user] : cfg.tokens) s.market().ensure_user(user);
      Gateway gw(s.node(), s.market(), cfg);
      int port = gw.start();
      std::fprintf(stderr, "listening on %s:%d\n", cfg.host.c_str(), port);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      gw.stop();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Session s(g);
    action(s);
    return 0;
  } catch (const Error& e) {
    if (g.json_out) std::cout << json{{"error", error_code_name(e.code())}, {"detail", e.detail()}}.dump() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
