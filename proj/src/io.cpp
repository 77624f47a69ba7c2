#include "fairbide/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fairbide::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_line(line));
  }
  return rows;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
  }
}

Matrix read_matrix_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path + ": empty matrix file");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw DataError(path + ": ragged row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      try {
        m(i, j) = std::stod(rows[i][j]);
      } catch (const std::exception&) {
        throw DataError(path + ": non-numeric cell at row " + std::to_string(i + 1));
      }
    }
  }
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf << (j + 1 < m.cols() ? "," : "\n");
    }
  }
}

IngestResult ingest(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path + ": empty file");
  const std::vector<std::string> expected{"session_id",          "insect_taxon", "plant_genus",
                                          "user_id",             "prior_session_count",
                                          "temperature",         "date"};
  if (rows[0] != expected)
    throw DataError(path + ": header must be exactly "
                    "session_id,insect_taxon,plant_genus,user_id,prior_session_count,"
                    "temperature,date");

  struct SessionInfo {
    std::string plant, user, date;
    std::int64_t prior_count = 0;
    std::string temperature;
    std::size_t index = 0;
  };
  std::map<std::string, SessionInfo> sessions;
  std::vector<std::string> session_order;
  std::set<std::string> taxa_set, genera_set;
  std::set<std::pair<std::string, std::string>> seen_pairs;
  std::vector<std::pair<std::string, std::string>> interactions;  // (session, insect)

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string line_no = std::to_string(r + 1);
    if (row.size() != expected.size())
      throw DataError(path + ": line " + line_no + ": expected 7 fields, got " +
                      std::to_string(row.size()));
    const std::string& sid = row[0];
    const std::string& taxon = row[1];
    const std::string& genus = row[2];
    const std::string& user = row[3];
    if (sid.empty() || taxon.empty() || genus.empty() || user.empty())
      throw DataError(path + ": line " + line_no + ": empty identifier");
    std::int64_t count = 0;
    try {
      std::size_t used = 0;
      count = std::stoll(row[4], &used);
      if (used != row[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(path + ": line " + line_no + ": bad prior_session_count '" + row[4] + "'");
    }
    if (count < 0)
      throw DataError(path + ": line " + line_no + ": negative prior_session_count");

    if (!seen_pairs.insert({sid, taxon}).second)
      throw DataError(path + ": line " + line_no + ": duplicate (session, insect) pair (" +
                      sid + ", " + taxon + ")");

    auto it = sessions.find(sid);
    if (it == sessions.end()) {
      SessionInfo info;
      info.plant = genus;
      info.user = user;
      info.date = row[6];
      info.prior_count = count;
      info.temperature = row[5];
      info.index = session_order.size();
      sessions.emplace(sid, info);
      session_order.push_back(sid);
    } else {
      if (it->second.plant != genus)
        throw DataError(path + ": session " + sid + " has conflicting plant_genus");
      if (it->second.user != user)
        throw DataError(path + ": session " + sid + " has conflicting user_id");
      if (it->second.prior_count != count)
        throw DataError(path + ": session " + sid + " has conflicting prior_session_count");
    }
    taxa_set.insert(taxon);
    genera_set.insert(genus);
    interactions.emplace_back(sid, taxon);
  }

  IngestResult out;
  out.session_ids = session_order;
  out.insect_taxa.assign(taxa_set.begin(), taxa_set.end());
  out.plant_genera.assign(genera_set.begin(), genera_set.end());
  const std::size_t n1 = session_order.size();
  const std::size_t n2 = out.insect_taxa.size();
  const std::size_t u = out.plant_genera.size();

  std::map<std::string, std::size_t> taxon_index, genus_index;
  for (std::size_t j = 0; j < n2; ++j) taxon_index[out.insect_taxa[j]] = j;
  for (std::size_t k = 0; k < u; ++k) genus_index[out.plant_genera[k]] = k;

  out.graph.b = Matrix(n1, n2, 0.0);
  for (const auto& [sid, taxon] : interactions)
    out.graph.b(sessions[sid].index, taxon_index[taxon]) = 1.0;

  Matrix p(n1, u, 0.0);
  out.prior_counts.resize(n1);
  bool all_temp = true;
  std::vector<double> temps(n1, 0.0);
  for (const auto& sid : session_order) {
    const SessionInfo& info = sessions[sid];
    p(info.index, genus_index[info.plant]) = 1.0;
    out.prior_counts[info.index] = info.prior_count;
    if (info.temperature.empty()) {
      all_temp = false;
    } else {
      try {
        temps[info.index] = std::stod(info.temperature);
      } catch (const std::exception&) {
        throw DataError(path + ": session " + sid + ": bad temperature '" +
                        info.temperature + "'");
      }
    }
  }
  out.plants.p = p;
  out.has_temperature = all_temp;

  Matrix s(n1, 1);
  for (std::size_t i = 0; i < n1; ++i)
    s(i, 0) = std::log10(static_cast<double>(out.prior_counts[i]) + 1.0);
  try {
    out.s = standardize_columns(s);
  } catch (const NumericError&) {
    throw DataError(path + ": constant protected variable");
  }

  if (all_temp) {
    Matrix t = Matrix::col_vector(temps);
    Matrix t_std;
    try {
      t_std = standardize_columns(t);
    } catch (const NumericError&) {
      throw DataError(path + ": constant temperature column");
    }
    Matrix x1(n1, u + 1);
    for (std::size_t i = 0; i < n1; ++i) {
      for (std::size_t k = 0; k < u; ++k) x1(i, k) = p(i, k);
      x1(i, u) = t_std(i, 0);
    }
    out.graph.x1 = x1;
  } else {
    out.graph.x1 = p;
  }
  out.graph.x2 = std::nullopt;
  return out;
}

void write_checkpoint(const std::string& path, const bvgae::EncoderParams& params,
                      const bvgae::LatentSignature& signature,
                      const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << kCheckpointMagic << "\n";
  out << "config_hash " << config_hash << "\n";
  out << "signature " << signature.d_plus << " " << signature.d_minus << "\n";
  const std::pair<const char*, const Matrix*> entries[] = {
      {"side1.w1", &params.side1.w1},       {"side1.w2_mu", &params.side1.w2_mu},
      {"side1.w2_sigma", &params.side1.w2_sigma},
      {"side2.w1", &params.side2.w1},       {"side2.w2_mu", &params.side2.w2_mu},
      {"side2.w2_sigma", &params.side2.w2_sigma}};
  char buf[32];
  for (const auto& [name, m] : entries) {
    out << "matrix " << name << " " << m->rows() << " " << m->cols() << "\n";
    for (std::size_t i = 0; i < m->rows(); ++i) {
      for (std::size_t j = 0; j < m->cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*m)(i, j));
        out << buf << (j + 1 < m->cols() ? " " : "\n");
      }
    }
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (!magic.empty() && magic.back() == '\r') magic.pop_back();
  if (magic != kCheckpointMagic)
    throw DataError(path + ": not a checkpoint (bad magic '" + magic + "')");
  Checkpoint ck;
  std::string key;
  in >> key >> ck.config_hash;
  if (key != "config_hash") throw DataError(path + ": malformed checkpoint header");
  in >> key >> ck.signature.d_plus >> ck.signature.d_minus;
  if (key != "signature") throw DataError(path + ": missing signature");
  std::map<std::string, Matrix*> slots{
      {"side1.w1", &ck.params.side1.w1},       {"side1.w2_mu", &ck.params.side1.w2_mu},
      {"side1.w2_sigma", &ck.params.side1.w2_sigma},
      {"side2.w1", &ck.params.side2.w1},       {"side2.w2_mu", &ck.params.side2.w2_mu},
      {"side2.w2_sigma", &ck.params.side2.w2_sigma}};
  std::size_t loaded = 0;
  while (in >> key) {
    if (key != "matrix") throw DataError(path + ": unexpected token '" + key + "'");
    std::string name;
    std::size_t r = 0, c = 0;
    in >> name >> r >> c;
    auto it = slots.find(name);
    if (it == slots.end()) throw DataError(path + ": unknown matrix '" + name + "'");
    Matrix m(r, c);
    for (std::size_t i = 0; i < r * c; ++i)
      if (!(in >> m.data()[i])) throw DataError(path + ": truncated matrix '" + name + "'");
    *it->second = std::move(m);
    ++loaded;
  }
  if (loaded != slots.size()) throw DataError(path + ": incomplete checkpoint");
  return ck;
}

std::string content_hash_hex(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content_hash_hex(bytes.data(), bytes.size());
}

void write_summary_json(const std::string& path, const eval::ExperimentReport& report) {
  nlohmann::json j;
  j["trials"] = report.trials.size();
  j["rejections"] = report.rejections;
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, stat] : report.summary) {
    metrics[name] = {{"mean", stat.mean},
                     {"std", stat.std},
                     {"count", stat.count},
                     {"single_trial", stat.single_trial}};
  }
  j["metrics"] = metrics;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_trials_csv(const std::string& path, const eval::ExperimentReport& report) {
  std::vector<std::string> header{"trial"};
  for (const auto& name : eval::metric_names()) header.push_back(name);
  std::vector<std::vector<std::string>> rows;
  char buf[32];
  for (std::size_t t = 0; t < report.trials.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (const auto& name : eval::metric_names()) {
      const double v = eval::metric_value(report.trials[t], name);
      if (std::isfinite(v)) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        row.emplace_back(buf);
      } else {
        row.emplace_back();
      }
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

}  // namespace fairbide::io
