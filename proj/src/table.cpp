#include "deeper/data/table.hpp"

#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"

namespace deeper::data {

EntityTable::EntityTable(std::string table_id, Schema schema)
    : table_id_(std::move(table_id)), schema_(std::move(schema)) {}

void EntityTable::add(Record record) {
  if (record.values.size() != schema_.size()) {
    throw ParseError("record '" + record.id + "' has " + std::to_string(record.values.size()) +
                     " values, schema has " + std::to_string(schema_.size()));
  }
  if (index_.count(record.id)) throw ParseError("duplicate record id '" + record.id + "'");
  index_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

const Record* EntityTable::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

const Record& EntityTable::at(const std::string& id) const {
  const Record* r = find(id);
  if (!r) throw ConfigError("table '" + table_id_ + "' has no record '" + id + "'");
  return *r;
}

const std::string& EntityTable::value(const std::string& id, const std::string& attribute) const {
  auto idx = schema_.index_of(attribute);
  if (!idx) throw ConfigError("unknown attribute '" + attribute + "'");
  return at(id).values[*idx];
}

EntityTable parse_table(std::string_view csv, const std::string& table_id,
                        const std::string& source) {
  auto rows = parse_csv(csv, source);
  if (rows.empty() || rows[0].size() < 2) {
    throw ParseError(source + ": missing header (need an id column and at least one attribute)");
  }
  std::vector<std::string> names(rows[0].begin() + 1, rows[0].end());
  Schema schema;
  try {
    schema = Schema(names);
  } catch (const ConfigError& e) {
    throw ParseError(source + ": bad header: " + e.what());
  }
  EntityTable table(table_id, std::move(schema));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto& row = rows[r];
    const std::string where = source + ": row " + std::to_string(r + 1);
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    if (row.size() != rows[0].size()) {
      throw ParseError(where + ": expected " + std::to_string(rows[0].size()) + " fields, got " +
                       std::to_string(row.size()));
    }
    Record rec{row[0], std::vector<std::string>(row.begin() + 1, row.end())};
    if (table.find(rec.id)) throw ParseError(where + ": duplicate record id '" + rec.id + "'");
    table.add(std::move(rec));
  }
  return table;
}

EntityTable load_table(const std::filesystem::path& path, const std::string& table_id) {
  return parse_table(read_file(path), table_id, path.string());
}

void write_table(const EntityTable& table, const std::filesystem::path& path,
                 const std::string& id_column) {
  std::vector<CsvRow> rows;
  CsvRow header{id_column};
  for (const auto& a : table.schema().attributes()) header.push_back(a);
  rows.push_back(std::move(header));
  for (const auto& rec : table.records()) {
    CsvRow row{rec.id};
    row.insert(row.end(), rec.values.begin(), rec.values.end());
    rows.push_back(std::move(row));
  }
  write_csv(path, rows);
}

}  // namespace deeper::data
