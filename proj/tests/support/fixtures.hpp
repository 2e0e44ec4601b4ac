#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace fixture {

// Small three-level bivariate table: 2 facilities, 2 teams each, 3 patients
// per team.
inline std::string small_csv() {
  return "patient,team,facility,age,sex,exp,pc,npc\n"
         "p1,t1,f1,30,F,2,1.5,2.0\n"
         "p2,t1,f1,45,M,2,2.5,1.0\n"
         "p3,t1,f1,60,F,2,3.5,4.0\n"
         "p4,t2,f1,25,M,5,1.2,0.8\n"
         "p5,t2,f1,50,F,5,2.2,2.1\n"
         "p6,t2,f1,70,M,5,4.1,3.3\n"
         "p7,t3,f2,35,F,1,1.9,1.4\n"
         "p8,t3,f2,40,M,1,2.8,2.9\n"
         "p9,t3,f2,65,F,1,3.0,2.2\n"
         "p10,t4,f2,20,M,3,0.9,1.1\n"
         "p11,t4,f2,55,F,3,2.6,2.4\n"
         "p12,t4,f2,75,M,3,3.9,3.6\n";
}

inline std::string minimal_config(const std::string& extra = "") {
  return "[data]\n"
         "numeric = age, exp\n"
         "categorical = sex\n"
         "[responses]\n"
         "names = pc, npc\n" +
         extra;
}

}  // namespace fixture
