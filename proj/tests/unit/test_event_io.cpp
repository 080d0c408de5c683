#include <cstring>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/event_io.hpp"
#include "test_support.hpp"

using namespace ehrcvd;
using ehrcvd::testing::ev;

TEST(EventIo, LineHasExactFieldOrder) {
  const auto line = event_to_json_line(ev("p 1", 12, Modality::lab, "ALBUMIN", 40.5));
  EXPECT_EQ(line, R"({"patient_id":"p 1","day":12,"modality":"lab","code":"ALBUMIN","value":40.5})");
  EXPECT_EQ(event_to_json_line(ev("x", 0, Modality::diagnosis, "I10")),
            R"({"patient_id":"x","day":0,"modality":"diagnosis","code":"I10","value":null})");
}

TEST(EventIo, RandomValuesRoundTripBitIdentically) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    std::uint64_t bits = rng.next_u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const RawEvent e = ev("p\"q\\é", rng.integer(0, 100000), Modality::vital, "SBP", v);
    const RawEvent back = event_from_json_line(event_to_json_line(e));
    ASSERT_EQ(back.patient_id, e.patient_id);
    ASSERT_EQ(back.day, e.day);
    std::uint64_t back_bits;
    std::memcpy(&back_bits, &*back.value, sizeof back_bits);
    ASSERT_EQ(back_bits, bits) << v;
  }
}

TEST(EventIo, RejectsMalformedLines) {
  EXPECT_THROW(event_from_json_line("{"), DataError);
  EXPECT_THROW(event_from_json_line("[1,2]"), DataError);
  EXPECT_THROW(event_from_json_line(R"({"patient_id":"p","day":1,"modality":"lab","code":"A"})"),
               DataError);
  EXPECT_THROW(
      event_from_json_line(
          R"({"patient_id":"p","day":1,"modality":"lab","code":"A","value":1,"extra":2})"),
      DataError);
  EXPECT_THROW(
      event_from_json_line(R"({"patient_id":"p","day":1.5,"modality":"lab","code":"A","value":1})"),
      DataError);
  EXPECT_THROW(
      event_from_json_line(R"({"patient_id":"p","day":1,"modality":"x","code":"A","value":1})"),
      DataError);
}

TEST(EventIo, StreamRoundTripNamesBadLine) {
  const std::vector<RawEvent> events = {ev("a", 1, Modality::diagnosis, "I10"),
                                        ev("a", 2, Modality::lab, "ALBUMIN", 38.0)};
  std::stringstream ss;
  write_events(ss, events);
  EXPECT_EQ(read_events(ss), events);

  std::stringstream bad(event_to_json_line(events[0]) + "\nnot json\n");
  try {
    read_events(bad);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(EventIo, AssembleFillsDemographicsAndSortsStably) {
  std::vector<RawEvent> events = {
      ev("b", 5, Modality::diagnosis, "I10"),
      ev("a", 9, Modality::diagnosis, "E11"),
      ev("a", 3, Modality::demographic, std::string(kSexCode), 1.0),
      ev("a", 3, Modality::demographic, std::string(kBirthDayCode), -9000.0),
      ev("a", 9, Modality::diagnosis, "E10"),
      ev("b", 1, Modality::demographic, std::string(kSexCode), 0.0),
      ev("b", 1, Modality::demographic, std::string(kBirthDayCode), -100.0),
  };
  const auto records = assemble_records(events);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].patient_id, "a");
  EXPECT_EQ(records[0].sex, Sex::male);
  EXPECT_EQ(records[0].birth_day, -9000);
  ASSERT_EQ(records[0].events.size(), 4u);
  EXPECT_EQ(records[0].events[2].code, "E11");
  EXPECT_EQ(records[0].events[3].code, "E10");
  EXPECT_EQ(records[1].sex, Sex::female);
  EXPECT_EQ(flatten_records(records).size(), events.size());

  events.pop_back();
  EXPECT_THROW(assemble_records(events), DataError);
}
