#include "nestery/definition_doc.hpp"

#include <charconv>

#include "nestery/error.hpp"

namespace nestery {

namespace {

void append_escaped(std::string& out, std::string_view text) {
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
}

class Reader {
 public:
  explicit Reader(std::string_view doc) : doc_(doc) {}

  void expect(std::string_view literal) {
    if (doc_.substr(pos_, literal.size()) != literal) malformed();
    pos_ += literal.size();
  }

  // Reads escaped text up to `terminator` (not consumed).
  std::string text_until(char terminator) {
    std::string out;
    while (true) {
      if (pos_ >= doc_.size()) malformed();
      char c = doc_[pos_];
      if (c == terminator) return out;
      if (c == '<' || c == '>' || c == '"') malformed();
      if (c == '&') {
        out += entity();
        continue;
      }
      out += c;
      ++pos_;
    }
  }

  std::string attribute(std::string_view name) {
    expect(name);
    expect("=\"");
    std::string value = text_until('"');
    expect("\"");
    return value;
  }

  std::int64_t int_attribute(std::string_view name) {
    std::string value = attribute(name);
    std::int64_t out = 0;
    auto* first = value.data();
    auto* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (value.empty() || ec != std::errc{} || ptr != last) malformed();
    return out;
  }

  void finish() const {
    if (pos_ != doc_.size()) malformed();
  }

  [[noreturn]] void malformed() const {
    throw Error(ErrorCode::MalformedDocument, "offset " + std::to_string(pos_));
  }

 private:
  char entity() {
    static constexpr std::pair<std::string_view, char> kEntities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    for (auto [name, ch] : kEntities) {
      if (doc_.substr(pos_, name.size()) == name) {
        pos_ += name.size();
        return ch;
      }
    }
    malformed();
  }

  std::string_view doc_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_definition(const VmDefinition& def) {
  const auto& r = def.resources;
  std::string out;
  out.reserve(192 + def.name.size() + def.image_ref.size());
  out += "<vm uuid=\"";
  out += def.uuid.hex();
  out += "\" level=\"";
  out += std::to_string(def.level);
  out += "\"><name>";
  append_escaped(out, def.name);
  out += "</name><resources cores=\"" + std::to_string(r.cpu_cores) + "\" priority=\"" +
         std::to_string(r.cpu_priority) + "\" ram_mib=\"" + std::to_string(r.ram_mib) + "\" disk_gib=\"" +
         std::to_string(r.disk_gib) + "\" nics=\"" + std::to_string(r.nics) + "\"/><image ref=\"";
  append_escaped(out, def.image_ref);
  out += "\"/></vm>";
  return out;
}

VmDefinition parse_definition(std::string_view doc) {
  Reader in(doc);
  VmDefinition def;

  in.expect("<vm ");
  std::string uuid_hex = in.attribute("uuid");
  in.expect(" ");
  std::int64_t level = in.int_attribute("level");
  in.expect("><name>");
  def.name = in.text_until('<');
  in.expect("</name><resources ");
  def.resources.cpu_cores = in.int_attribute("cores");
  in.expect(" ");
  def.resources.cpu_priority = in.int_attribute("priority");
  in.expect(" ");
  def.resources.ram_mib = in.int_attribute("ram_mib");
  in.expect(" ");
  def.resources.disk_gib = in.int_attribute("disk_gib");
  in.expect(" ");
  def.resources.nics = in.int_attribute("nics");
  in.expect("/><image ");
  def.image_ref = in.attribute("ref");
  in.expect("/></vm>");
  in.finish();

  if (!Uuid::try_parse(uuid_hex, def.uuid)) throw Error(ErrorCode::InvariantViolation, "uuid");
  if (level < 1 || level > 1000) throw Error(ErrorCode::InvariantViolation, "level");
  def.level = static_cast<int>(level);
  def.validate();
  return def;
}

}  // namespace nestery
