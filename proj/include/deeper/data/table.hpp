#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "deeper/schema.hpp"

namespace deeper::data {

// One entity. `values[i]` belongs to schema attribute i; empty string is NULL.
struct Record {
  std::string id;
  std::vector<std::string> values;
};

class EntityTable {
 public:
  EntityTable() = default;
  EntityTable(std::string table_id, Schema schema);

  const std::string& table_id() const { return table_id_; }
  const Schema& schema() const { return schema_; }
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  // Throws ParseError on a duplicate id or a row of the wrong width.
  void add(Record record);
  const Record* find(const std::string& id) const;
  const Record& at(const std::string& id) const;
  // Value of `attribute` for record `id`.
  const std::string& value(const std::string& id, const std::string& attribute) const;

 private:
  std::string table_id_;
  Schema schema_;
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Header row: first column names the id, the rest form the schema.
EntityTable load_table(const std::filesystem::path& path, const std::string& table_id);
EntityTable parse_table(std::string_view csv, const std::string& table_id,
                        const std::string& source = "<table>");
void write_table(const EntityTable& table, const std::filesystem::path& path,
                 const std::string& id_column = "id");

}  // namespace deeper::data
