#include "nnreach/network.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "nnreach/text.hpp"

namespace nnreach {

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Next non-blank line with comments stripped; empty optional at end of stream.
  bool next(std::string& out) {
    std::string raw;
    while (std::getline(in_, raw)) {
      ++line_;
      if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
      auto view = trim(raw);
      if (view.empty()) continue;
      out.assign(view);
      return true;
    }
    return false;
  }

  std::string expect(const char* what) {
    std::string out;
    if (!next(out)) throw ParseError(line_ + 1, std::string("truncated file: expected ") + what);
    return out;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::vector<double> parse_row(const std::string& text, std::size_t expected, std::size_t line, const std::string& what) {
  auto parts = split(text, ',');
  if (parts.size() != expected) {
    throw ParseError(line, what + ": expected " + std::to_string(expected) + " values, found " +
                               std::to_string(parts.size()));
  }
  std::vector<double> values;
  values.reserve(expected);
  for (auto p : parts) {
    double v = 0.0;
    try {
      v = parse_double(p);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line, what + ": " + e.what());
    }
    if (!std::isfinite(v)) throw ParseError(line, what + ": non-finite value");
    values.push_back(v);
  }
  return values;
}

std::string value_after(const std::string& line, const std::string& key, std::size_t lineno) {
  if (!line.starts_with(key + "=")) throw ParseError(lineno, "expected '" + key + "='");
  return line.substr(key.size() + 1);
}

}  // namespace

Network load_network(std::istream& in) {
  LineReader reader(in);
  std::string line = reader.expect("layers=");
  long long layers = 0;
  try {
    layers = parse_int(value_after(line, "layers", reader.line()));
  } catch (const std::invalid_argument& e) {
    throw ParseError(reader.line(), e.what());
  }
  if (layers < 1) throw ParseError(reader.line(), "layers must be >= 1");

  line = reader.expect("sizes=");
  const auto size_values = parse_row(value_after(line, "sizes", reader.line()), static_cast<std::size_t>(layers + 1),
                                     reader.line(), "sizes");
  std::vector<Eigen::Index> sizes;
  for (double s : size_values) {
    if (s < 1 || s != std::floor(s)) throw ParseError(reader.line(), "sizes must be positive integers");
    sizes.push_back(static_cast<Eigen::Index>(s));
  }

  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  for (long long l = 0; l < layers; ++l) {
    const std::string tag = "layer " + std::to_string(l);
    line = reader.expect("W");
    if (line != "W") throw ParseError(reader.line(), tag + ": expected 'W'");
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      line = reader.expect("weight row");
      if (line == "b") throw ParseError(reader.line(), tag + " weights: expected " + std::to_string(w.rows()) + " rows");
      const auto row = parse_row(line, static_cast<std::size_t>(w.cols()), reader.line(), tag + " weights");
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = row[c];
    }
    line = reader.expect("b");
    if (line != "b") throw ParseError(reader.line(), tag + ": expected 'b'");
    line = reader.expect("bias row");
    const auto row = parse_row(line, static_cast<std::size_t>(sizes[l + 1]), reader.line(), tag + " bias");
    weights.push_back(std::move(w));
    biases.push_back(Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  if (reader.next(line)) throw ParseError(reader.line(), "unexpected trailing content");
  return Network(std::move(weights), std::move(biases));
}

void save_network(std::ostream& out, const Network& net) {
  const auto sizes = net.layer_sizes();
  out << "layers=" << net.num_layers() << '\n';
  out << "sizes=";
  for (std::size_t i = 0; i < sizes.size(); ++i) out << (i ? "," : "") << sizes[i];
  out << '\n';
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    out << "W\n";
    const auto& w = net.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) out << join_doubles(w.row(r)) << '\n';
    out << "b\n" << join_doubles(net.biases(l)) << '\n';
  }
}

Network load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file: " + path);
  return load_network(in);
}

void save_network_file(const std::string& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write network file: " + path);
  save_network(out, net);
}

}  // namespace nnreach
