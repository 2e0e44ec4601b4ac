#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "mmglmm/error.hpp"
#include "mmglmm/table.hpp"
#include "oracles.hpp"

using namespace mmglmm;

namespace {

TableSchema basic_schema() {
  TableSchema s;
  s.identifiers = {"patient", "team", "facility"};
  s.numeric = {"age"};
  s.responses = {"y"};
  return s;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Usage;
}

std::string numbered_csv(int n) {
  std::string csv = "patient,team,facility,age,y\n";
  for (int i = 1; i <= n; ++i)
    csv += "p" + std::to_string(i) + ",t1,f1," + std::to_string(i) + "," + std::to_string(i * 0.5) + "\n";
  return csv;
}

}  // namespace

TEST(Ingest, ThreeRowsFourColumns) {
  TableSchema s;
  s.identifiers = {"patient", "team", "facility"};
  s.numeric = {"y"};
  s.responses = {"y"};
  const auto t = ingest_table("patient,team,facility,y\na,t,f,1\nb,t,f,2\nc,t,f,3\n", s);
  EXPECT_EQ(t.n_rows, 3u);
  EXPECT_EQ(t.column("y").numbers[2], 3.0);
  EXPECT_EQ(t.response_columns, std::vector<std::string>{"y"});
}

TEST(Ingest, NaMarksOneMissingCell) {
  const auto t = ingest_table("patient,team,facility,age,y\na,t,f,1,1\nb,t,f,NA,2\nc,t,f,3,3\n", basic_schema());
  EXPECT_EQ(t.column("age").missing_count(), 1u);
  EXPECT_TRUE(t.column("age").missing[1]);
}

TEST(Ingest, DuplicateHeaderIsSchemaError) {
  EXPECT_EQ(kind_of([] { ingest_table("patient,team,facility,age,age,y\na,t,f,1,1,1\n", basic_schema()); }),
            ErrorKind::Schema);
}

TEST(Ingest, MissingDeclaredColumnIsSchemaError) {
  EXPECT_EQ(kind_of([] { ingest_table("patient,team,facility,y\na,t,f,1\n", basic_schema()); }), ErrorKind::Schema);
}

TEST(Ingest, ZeroRowsIsEmptyInput) {
  EXPECT_EQ(kind_of([] { ingest_table("patient,team,facility,age,y\n", basic_schema()); }), ErrorKind::EmptyInput);
}

TEST(Ingest, TabDelimiterDetected) {
  const auto t = ingest_table("patient\tteam\tfacility\tage\ty\na\tt\tf\t4\t1\n", basic_schema());
  EXPECT_EQ(t.column("age").numbers[0], 4.0);
}

TEST(Ingest, RowWithoutIdentifierDropped) {
  const auto t = ingest_table("patient,team,facility,age,y\na,t,f,1,1\n,t,f,2,2\n", basic_schema());
  EXPECT_EQ(t.n_rows, 1u);
  EXPECT_EQ(t.dropped_missing_id, 1u);
}

TEST(Preprocess, ModeImputation) {
  TableSchema s = basic_schema();
  s.categorical = {"c"};
  const auto t = ingest_table("patient,team,facility,age,y,c\na,t,f,1,1,A\nb,t,f,1,1,A\nc,t,f,1,1,B\nd,t,f,1,1,NA\n", s);
  PreprocessRules r;
  r.impute["c"] = Imputation::Mode;
  const auto out = preprocess(t, r);
  EXPECT_EQ(out.column("c").labels, (std::vector<std::string>{"A", "A", "B", "A"}));
  EXPECT_EQ(out.column("c").missing_count(), 0u);
}

TEST(Preprocess, ModeUndefinedIsImputationError) {
  TableSchema s = basic_schema();
  s.categorical = {"c"};
  const auto t = ingest_table("patient,team,facility,age,y,c\na,t,f,1,1,NA\n", s);
  PreprocessRules r;
  r.impute["c"] = Imputation::Mode;
  EXPECT_EQ(kind_of([&] { preprocess(t, r); }), ErrorKind::Imputation);
}

TEST(Preprocess, DropRowImputation) {
  const auto t = ingest_table("patient,team,facility,age,y\na,t,f,1,1\nb,t,f,NA,2\n", basic_schema());
  PreprocessRules r;
  r.impute["age"] = Imputation::DropRow;
  EXPECT_EQ(preprocess(t, r).n_rows, 1u);
}

TEST(Preprocess, TrimMatchesSortedPercentileCut) {
  const auto t = ingest_table(numbered_csv(100), basic_schema());
  PreprocessRules r;
  r.trim["age"] = {1.0, 99.0};
  const auto out = preprocess(t, r);
  std::vector<double> ages(100);
  std::iota(ages.begin(), ages.end(), 1.0);
  const double lo = oracle::percentile(ages, 1.0);
  const double hi = oracle::percentile(ages, 99.0);
  const auto kept = std::count_if(ages.begin(), ages.end(), [&](double a) { return a >= lo && a <= hi; });
  EXPECT_EQ(out.n_rows, static_cast<std::size_t>(kept));
  EXPECT_EQ(out.n_rows, 98u);
}

TEST(Preprocess, TrimIsIdempotent) {
  const auto t = ingest_table(numbered_csv(100), basic_schema());
  PreprocessRules r;
  r.trim["age"] = {5.0, 95.0};
  const auto once = preprocess(t, r);
  const auto twice = preprocess(once, r);
  EXPECT_EQ(once.n_rows, twice.n_rows);
  EXPECT_EQ(once.column("age").numbers, twice.column("age").numbers);
}

TEST(Preprocess, BinBetweenThresholds) {
  BinRule rule{{25.0, 50.0}, {"Near", "Middle", "Far"}};
  EXPECT_EQ(bin_value(rule, 30.0), "Middle");
  EXPECT_EQ(bin_value(rule, 10.0), "Near");
  EXPECT_EQ(bin_value(rule, 50.0), "Far");
}

TEST(Preprocess, BinCreatesCategoricalColumn) {
  const auto t = ingest_table("patient,team,facility,age,y\na,t,f,30,1\nb,t,f,70,1\n", basic_schema());
  PreprocessRules r;
  r.bins["age"] = BinRule{{25.0, 50.0}, {"Near", "Middle", "Far"}};
  const auto out = preprocess(t, r);
  EXPECT_EQ(out.column("age").kind, ColumnKind::Categorical);
  EXPECT_EQ(out.column("age").labels, (std::vector<std::string>{"Middle", "Far"}));
}

TEST(Hierarchy, CountsLevels) {
  const auto t = ingest_table("patient,team,facility,age,y\na,t1,f,1,1\nb,t1,f,1,1\nc,t2,f,1,1\nd,t2,f,1,1\n",
                              basic_schema());
  const auto h = build_hierarchy(t, {"patient", "team", "facility"});
  EXPECT_EQ(h.n_patients(), 4u);
  EXPECT_EQ(h.n_teams(), 2u);
  EXPECT_EQ(h.n_facilities(), 1u);
}

TEST(Hierarchy, SinglePatient) {
  const auto t = ingest_table("patient,team,facility,age,y\na,t,f,1,1\n", basic_schema());
  const auto h = build_hierarchy(t, {"patient", "team", "facility"});
  EXPECT_EQ(h.n_patients() + h.n_teams() + h.n_facilities(), 3u);
}

TEST(Hierarchy, TeamUnderTwoFacilitiesNamesTeam) {
  const auto t = ingest_table("patient,team,facility,age,y\na,T,F1,1,1\nb,T,F2,1,1\n", basic_schema());
  try {
    build_hierarchy(t, {"patient", "team", "facility"});
    FAIL() << "expected nesting violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NestingViolation);
    EXPECT_NE(std::string(e.what()).find("'T'"), std::string::npos) << e.what();
  }
}

TEST(Hierarchy, InvariantUnderRowPermutation) {
  std::vector<std::string> rows = {"a,t1,f1,1,1", "b,t1,f1,1,1", "c,t2,f1,1,1", "d,t3,f2,1,1", "e,t3,f2,1,1"};
  const auto build = [&](const std::vector<std::string>& r) {
    std::string csv = "patient,team,facility,age,y\n";
    for (const auto& line : r) csv += line + "\n";
    return build_hierarchy(ingest_table(csv, basic_schema()), {"patient", "team", "facility"});
  };
  const auto base = build(rows);
  std::mt19937 rng(4);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto h = build(rows);
    EXPECT_EQ(h.patients, base.patients);
    EXPECT_EQ(h.teams, base.teams);
    EXPECT_EQ(h.facilities, base.facilities);
    EXPECT_EQ(h.team_facility, base.team_facility);
  }
}
