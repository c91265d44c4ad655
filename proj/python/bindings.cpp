// JSON crosses the boundary as text; the Python package decodes it.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nestery/error.hpp"
#include "nestery/market.hpp"
#include "nestery/node.hpp"
#include "nestery/perfbench.hpp"

namespace py = pybind11;
using namespace nestery;
using nlohmann::json;

namespace {

std::string dump_results(const std::vector<CommandResult>& results) {
  json out = json::array();
  for (const auto& r : results) out.push_back(r.to_json());
  return out.dump();
}

std::string dump_emissions(const std::vector<Emission>& emissions) {
  json out = json::array();
  for (const auto& e : emissions) {
    out.push_back({{"idempotency_key", e.idempotency_key}, {"command", command_to_json(e.command)}});
  }
  return out.dump();
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_nestery, m) {
  static py::exception<Error> error_type(m, "NativeError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(std::string(error_code_name(e.code())), e.detail());
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  py::class_<Node>(m, "Node")
      .def(py::init([](const std::string& data_dir, const std::string& root_capacity) {
             NodeOptions o;
             o.data_dir = data_dir;
             if (!root_capacity.empty()) o.root_capacity = resources_from_json(parse(root_capacity));
             return std::make_unique<Node>(o);
           }),
           py::arg("data_dir"), py::arg("root_capacity") = "")
      .def("execute",
           [](Node& n, const std::string& command, const std::string& key) {
             return n.execute(command_from_json(parse(command)), key).to_json().dump();
           })
      .def("submit", [](Node& n, const std::string& command,
                        const std::string& key) { return n.submit(command_from_json(parse(command)), key); })
      .def("process_pending", [](Node& n) { return dump_results(n.process_pending()); })
      .def("tick",
           [](Node& n, std::optional<Seconds> now) { return dump_emissions(n.tick(now)); },
           py::arg("now") = py::none())
      .def("status", [](const Node& n) { return n.status().dump(); })
      .def("message", [](const Node& n, MsgId id) { return n.message_json(id).dump(); })
      .def("capacity_violation", &Node::capacity_violation)
      .def_property_readonly("now", &Node::now);

  py::class_<market::Market>(m, "Market")
      .def(py::init([](Node& node, const std::string& state_file) {
             return std::make_unique<market::Market>(node, state_file);
           }),
           py::arg("node"), py::arg("state_file") = "", py::keep_alive<1, 2>())
      .def("ensure_user", &market::Market::ensure_user)
      .def("register_offer",
           [](market::Market& mk, const std::string& provider, const std::string& offer) {
             return market::offer_to_json(mk.register_offer(provider, market::offer_request_from_json(parse(offer))))
                 .dump();
           })
      .def("list_offers",
           [](const market::Market& mk) {
             json out = json::array();
             for (const auto& o : mk.list_offers()) out.push_back(market::offer_to_json(o));
             return out.dump();
           })
      .def("negotiate",
           [](market::Market& mk, const std::string& consumer, std::int64_t offer_id) {
             return market::contract_to_json(mk.negotiate_contract(consumer, offer_id)).dump();
           })
      .def("terminate",
           [](market::Market& mk, std::int64_t contract_id, const std::string& caller) {
             return market::contract_to_json(mk.terminate_contract(contract_id, caller)).dump();
           })
      .def("become_provider",
           [](market::Market& mk, const std::string& user, const std::string& profile, const std::string& vm) {
             mk.become_provider(user, market::profile_from_json(parse(profile)), Uuid::parse(vm));
           })
      .def("ledger",
           [](const market::Market& mk, const std::string& user) {
             return market::ledger_to_json(mk.ledger_report(user)).dump();
           })
      .def("accrue", &market::Market::accrue)
      .def("state", [](const market::Market& mk) { return mk.to_json().dump(); });

  m.def(
      "run_experiment",
      [](double mu, double sigma, std::uint64_t seed, double peak, double warmup_s, int users, int period_s,
         double think_s, int slots) {
        bench::OverheadModel model;
        model.warmup_peak_multiplier = peak;
        model.warmup_duration_s = warmup_s;
        model.validate();
        bench::LoadProfile profile{users, period_s, think_s, seed};
        return bench::run_experiment(model, profile, bench::ServiceTimeBase{mu, sigma}, slots).summary_json().dump();
      },
      py::arg("mu"), py::arg("sigma"), py::arg("seed"), py::arg("warmup_peak"), py::arg("warmup_s"),
      py::arg("users"), py::arg("period_s"), py::arg("think_s"), py::arg("slots"),
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "calibrate",
      [](double avg, double p80, double p90) {
        bench::CalibrationResult r =
            bench::calibrate(bench::StatsSummary{avg, p80, p90, 0}, bench::LoadProfile{}, bench::OverheadModel{});
        return py::make_tuple(r.base.mu, r.base.sigma, r.residual);
      },
      py::arg("avg"), py::arg("p80"), py::arg("p90"));

  m.def("overhead_pct", [](double baseline_avg, double subject_avg) {
    return bench::overhead_pct(bench::StatsSummary{baseline_avg, 0, 0, 1}, bench::StatsSummary{subject_avg, 0, 0, 1});
  });
}
