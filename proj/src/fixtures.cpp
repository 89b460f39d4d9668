#include "spanforge/fixtures.hpp"

#include "spanforge/error.hpp"

namespace spanforge::fixtures {

namespace {

const char* const kT1 = R"aql(-- T1: people and their phone numbers
create dictionary FirstNames as (
  'James', 'Mary', 'Robert', 'Patricia', 'John', 'Jennifer', 'Michael', 'Linda',
  'David', 'Elizabeth', 'William', 'Barbara', 'Richard', 'Susan', 'Joseph', 'Sarah',
  'Thomas', 'Karen', 'José', 'Zoë', 'Renée', 'André'
);
create dictionary Titles as ('Mr', 'Dr', 'Mrs', 'Ms', 'Prof');

create view First as extract dictionary FirstNames on D.text from Document D;
create view Title as extract dictionary Titles on D.text from Document D;
create view Caps as extract regex /[A-ZÀ-Ý][a-zß-ÿ]+/ on D.text from Document D;

create view PhoneParen as extract regex /\(\d{3}\) \d{3}-\d{4}/ on D.text from Document D;
create view PhoneDash as extract regex /\d{3}-\d{3}-\d{4}/ on D.text from Document D;
create view PhoneIntl as extract regex /\+\d{1,2} \d{3} \d{3} \d{4}/ on D.text from Document D;
create view Phone as union all PhoneParen, PhoneDash, PhoneIntl;

create view FullName as select * from First, Caps where Follows(First.match, Caps.match, 1, 1);
create view TitledName as select * from Title, Caps where Follows(Title.match, Caps.match, 2, 2);
create view LastName as select match_r from FullName;
create view TitledLast as select match_r from TitledName;
create view Person as union all LastName, TitledLast;

create view PersonPhone as select * from Person, Phone where Follows(Person.match_r, Phone.match, 1, 40);
create view Phones as consolidate Phone using 'ContainedWithin';

output view PersonPhone;
output view Phones;
)aql";

const char* const kT2 = R"aql(-- T2: organizations and contact addresses
create dictionary OrgSuffixes as ('Corp', 'Inc', 'LLC', 'Ltd', 'Industries', 'Systems', 'Group', 'Bank');
create dictionary Verbs as ('met', 'called', 'emailed', 'joined', 'left', 'hired', 'visited', 'thanked');

create view Suffix as extract dictionary OrgSuffixes on D.text from Document D;
create view Verb as extract dictionary Verbs on D.text from Document D;
create view CapWord as extract regex /[A-Z][a-z]+/ on D.text from Document D;
create view Url as extract regex /www\.[a-z]+\.(com|org|net)/ on D.text from Document D;
create view Email as extract regex /[a-z]+(\.[a-z]+)*@[a-z]+\.(com|org|net)/ on D.text from Document D;
create view Domain as extract regex /[a-z]+\.(com|org|net)/ on D.text from Document D;

create view Org as select * from CapWord, Suffix where Follows(CapWord.match, Suffix.match, 1, 1);
create view OrgAction as select * from Org, Verb where Follows(Org.match_r, Verb.match, 1, 1);
create view Contact as union all Url, Email;
create view Addresses as consolidate Contact using 'ContainedWithin';
create view BareDomain as select * from Domain where SpanLengthGreaterThan(Domain.match, 8);

output view Org;
output view OrgAction;
output view Addresses;
output view BareDomain;
)aql";

const char* const kT3 = R"aql(-- T3: dates and times
create dictionary Months as (
  'January', 'February', 'March', 'April', 'May', 'June',
  'July', 'August', 'September', 'October', 'November', 'December'
);

create view Month as extract dictionary Months on D.text from Document D;
create view DayYear as extract regex /\d{1,2}, \d{4}/ on D.text from Document D;
create view IsoDate as extract regex /\d{4}-\d{2}-\d{2}/ on D.text from Document D;
create view SlashDate as extract regex /\d{1,2}\/\d{1,2}\/\d{4}/ on D.text from Document D;
create view Clock as extract regex /\d{1,2}:\d{2} (am|pm)/ on D.text from Document D;
create view Year as extract regex /(19|20)\d{2}/ on D.text from Document D;

create view LongDate as select * from Month, DayYear where Follows(Month.match, DayYear.match, 1, 1);
create view LongDateMonth as select match from LongDate;
create view AnyDate as union all LongDateMonth, IsoDate, SlashDate;
create view Dates as consolidate AnyDate using 'ContainedWithin';
create view Appointment as select * from Clock, Dates where Follows(Clock.match, Dates.match, 1, 8);
create view YearInDate as select * from IsoDate, Year where Contains(IsoDate.match, Year.match);

output view Dates;
output view Appointment;
output view YearInDate;
)aql";

const char* const kT4 = R"aql(-- T4: amounts of money and percentages
create dictionary Currencies as ('USD', 'EUR', 'CHF', 'GBP', 'dollars');

create view Currency as extract dictionary Currencies on D.text from Document D;
create view DollarSign as extract regex /\$\d{1,3}(,\d{3})*(\.\d{2})?/ on D.text from Document D;
create view Number as extract regex /\d+(\.\d+)?/ on D.text from Document D;
create view Percent as extract regex /\d+(\.\d+)?%/ on D.text from Document D;
create view Millions as extract regex /\d+(\.\d+)? million/ on D.text from Document D;
create view Revenue as extract regex /revenue of/ on D.text from Document D;

create view CodeAmount as select * from Currency, Number where Follows(Currency.match, Number.match, 1, 1);
create view CodeAmountSpan as select match_r from CodeAmount;
create view Amount as union all DollarSign, Millions;
create view Amounts as consolidate Amount using 'ContainedWithin';
create view Reported as select * from Revenue, Amounts where Follows(Revenue.match, Amounts.match, 1, 1);
create view BigPercent as select * from Percent where SpanLengthGreaterThan(Percent.match, 4);

output view Amounts;
output view CodeAmountSpan;
output view Reported;
output view BigPercent;
)aql";

const char* const kT5 = R"aql(-- T5: co-occurrence windows over tokens
create view Word as extract regex /[A-Za-z]+/ on D.text from Document D;
create view Cap as extract regex /[A-Z][a-z]+/ on D.text from Document D;
create view Num as extract regex /\d+/ on D.text from Document D;

create view CapContext as select * from Cap, Word where Follows(Cap.match, Word.match, 0, 24);
create view NumContext as select * from Word, Num where Follows(Word.match, Num.match, 0, 24);
create view CapPair as select * from Cap, Cap where And(Follows(Cap.match, Cap.match, 1, 32), Not(Overlaps(Cap.match, Cap.match)));
create view Near as select * from CapContext, Num where Follows(CapContext.match_r, Num.match, 0, 16);
create view NearCap as select match from Near;
create view Mentions as union all NearCap, Cap;
create view Windows as consolidate Mentions using 'ContainedWithin';
create view LongPair as select * from CapPair where SpanLengthGreaterThan(CapPair.match, 5);

output view NumContext;
output view Windows;
output view LongPair;
)aql";

} // namespace

const std::vector<DemoQuery>& demo_queries() {
    static const std::vector<DemoQuery> queries = {
        {"T1", "people and phone numbers", kT1, false},
        {"T2", "organizations and contacts", kT2, false},
        {"T3", "dates and times", kT3, false},
        {"T4", "money and percentages", kT4, false},
        {"T5", "token co-occurrence windows", kT5, true},
    };
    return queries;
}

const DemoQuery& demo_query(std::string_view name) {
    for (const auto& q : demo_queries()) {
        if (q.name == name) return q;
    }
    throw Error("unknown demo query '" + std::string(name) + "' (expected T1..T5)");
}

corpus::Corpus demo_corpus(std::size_t documents, std::size_t doc_size, std::uint64_t seed) {
    return corpus::synthetic_corpus(documents, {doc_size}, seed);
}

} // namespace spanforge::fixtures
