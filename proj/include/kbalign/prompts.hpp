#pragma once

#include <map>
#include <string>
#include <string_view>

namespace kbalign::prompts {

// Fills {placeholder} slots. Unknown placeholders are left verbatim.
std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& slots);

inline constexpr std::string_view kShortAnnotation =
    "You are a master of extracting questions and answers from text. \n"
    "Based on the provided content, construct five questions and answers \n"
    "that should be directly based on the text content, separated by line breaks. \n"
    "Please ensure that the expression of the question clearly points to \n"
    "the specific information in the text, and avoid using vague or overly \n"
    "broad references. At the same time, emphasize direct references or \n"
    "specific details in the text to increase the accuracy and depth of the problem. \n"
    "The questions should be answerable in a few words. \n"
    "Output question and answer alternately on each line.\n"
    "Content: {content}\n"
    "Response:\n";

inline constexpr std::string_view kLongQuestionGen =
    "You will receive a document. Please generate 3 generalizable, \n"
    "ambiguous questions based on the document content. The questions \n"
    "should align with the themes of the document. Separate the questions \n"
    "by line breaks.\n"
    "document: {document}\n"
    "output:\n";

inline constexpr std::string_view kLongInfoExtract =
    "You will receive a document and a question. Please provide an answer \n"
    "to the question based on the document information. If unable to answer, \n"
    "return 'none'; otherwise, output the answer directly.\n"
    "document: {document}\n"
    "question: {question}\n"
    "output:\n";

inline constexpr std::string_view kLongRefine =
    "You will receive a concatenated answer from multiple sources. \n"
    "Please refine and optimize the expression to make it smoother. \n"
    "Output the final answer directly without unnecessary explanation.\n"
    "question: {question}\n"
    "answer: {answer}\n"
    "output:\n";

inline constexpr std::string_view kVerifyTeacher =
    "You are a teacher evaluating student responses. Remember:\n"
    "1. If the student's response fully aligns with the golden answer, start your response with "
    "'The student's response is correct because'.\n"
    "2. Otherwise, start your response with 'The student response is wrong because', and provide "
    "the ERROR TYPE!!! (e.g., does not answer the question directly, provides totally wrong "
    "information, provides only part of the information, provides unrelated information)\n"
    "3. Notice! You are NOT ALLOWED to directly point out the correct answer in your "
    "verification. You are NOT ALLOWED to directly point out the correct answer in your "
    "verification. You are NOT ALLOWED to directly point out the correct answer in your "
    "verification. You should only tell me the correctness and the error type.\n"
    "Now here are the materials:\n"
    "Reference: {reference}\n"
    "Question: {question}\n"
    "Golden Answer: {golden_answer}\n"
    "Student Response: {student_response}\n"
    "Please generate your verification. You should start with the judgement, and then EXPLAIN "
    "the reason / the error type.\n";

inline constexpr std::string_view kDownstreamQA =
    "You are an expert who has read a lot of knowledge base. \n"
    "Please answer the question according to the content of the KB. \n"
    "<KB_{kb_id}> You can refer to some segments from the KB to help \n"
    "you answer the question. \n"
    "References:{references}\n"
    "Now the question is: {question}\n"
    "{dataset_prompt}\n";

inline constexpr std::string_view kJudge =
    "Given one question, there is a groundtruth and a predict_answer. \n"
    "Please decide whether they are the same or not in semantic. \n"
    "Please only output 'True' or 'False'.\n"
    "Question: {question}\n"
    "groundtruth = {ground_truth}\n"
    "predict_answer = {predict}\n";

// Per-dataset output-style suffixes for the downstream QA template.
inline constexpr std::string_view kDatasetPromptLoogle = "Please answer this question.";
inline constexpr std::string_view kDatasetPromptAsqa =
    "Write an accurate, engaging, and concise answer for the given question. Use an unbiased "
    "and journalistic tone.";
inline constexpr std::string_view kDatasetPromptJecqa =
    "The answer may be multiple or single, so be sure to choose all the correct options.";

// Verify target prefixes mandated by the teacher template.
inline constexpr std::string_view kVerifyCorrectPrefix =
    "The student's response is correct because";
inline constexpr std::string_view kVerifyWrongPrefix = "The student response is wrong because";

std::string dataset_prompt_for(const std::string& label);

}  // namespace kbalign::prompts
